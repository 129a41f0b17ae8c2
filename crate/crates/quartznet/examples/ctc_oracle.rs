//! CTC loss on a small lattice, checked against brute-force path
//! enumeration, plus the collapse rule and both decoders on the same
//! input.
//!
//!     cargo run --release -p quartznet --example ctc_oracle

use quartznet::ctc::{
    beam_search, collapse, ctc_loss, greedy_decode, BeamConfig, Vocabulary,
};
use quartznet::rng::Rng;

fn main() {
    let vocab = Vocabulary::new("ab").unwrap();
    let classes = vocab.size();
    let blank = vocab.blank_index();
    let frames = 5;

    // A random but reproducible lattice.
    let mut rng = Rng::new(7);
    let mut lp = vec![0.0; frames * classes];
    for t in 0..frames {
        let logits: Vec<f64> = (0..classes).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        for (v, &l) in logits.iter().enumerate() {
            lp[t * classes + v] = l - mx - z.ln();
        }
    }

    println!("lattice (probabilities per frame):");
    for t in 0..frames {
        let row: Vec<String> = (0..classes)
            .map(|v| format!("{:.3}", lp[t * classes + v].exp()))
            .collect();
        println!("  t={t}: a={} b={} blank={}", row[0], row[1], row[2]);
    }

    // Loss for target "ab" two ways: forward-backward vs enumerating all
    // classes^frames paths and summing the ones that collapse to "ab".
    let target = vocab.encode("ab").unwrap();
    let out = ctc_loss(&lp, frames, classes, &target, blank).unwrap();

    let mut brute = f64::NEG_INFINITY;
    for code in 0..classes.pow(frames as u32) {
        let mut c = code;
        let mut logp = 0.0;
        let mut path = Vec::new();
        for t in 0..frames {
            let v = c % classes;
            c /= classes;
            logp += lp[t * classes + v];
            path.push(v);
        }
        if collapse(&path, blank) == target {
            brute = if brute == f64::NEG_INFINITY {
                logp
            } else {
                brute.max(logp) + (-(brute - logp).abs()).exp().ln_1p()
            };
        }
    }
    let lattice = out.lattice.as_ref().unwrap();
    println!("\nloss(\"ab\")        = {:.9}", out.loss);
    println!("enumeration oracle = {:.9}", -brute);
    println!("loss from beta     = {:.9}", lattice.loss_from_beta);

    // The gradient rows are negative symbol posteriors: each sums to -1.
    println!("\nper-frame gradient row sums (must be -1):");
    for t in 0..frames {
        let s: f64 = out.grad[t * classes..(t + 1) * classes].iter().sum();
        println!("  t={t}: {s:+.9}");
    }

    // Decoders on the same lattice.
    println!("\ngreedy: {:?}", greedy_decode(&lp, frames, &vocab));
    let cfg = BeamConfig {
        beam_width: 8,
        alpha: 0.0,
        beta: 0.0,
    };
    println!("beam search (width 8):");
    for hyp in beam_search(&lp, frames, &vocab, None, &cfg).unwrap().iter().take(5) {
        println!("  {:+.4}  {:?}", hyp.score, hyp.text);
    }
}
