//! Shallow n-gram fusion: a bigram language model tips the beam search
//! toward the likelier word sequence when the acoustics are ambiguous.
//!
//!     cargo run --release -p quartznet --example decode_with_lm

use quartznet::ctc::{beam_search, BeamConfig, NGramLM, Vocabulary};

const ARPA: &str = "\
\\data\\
ngram 1=5
ngram 2=4

\\1-grams:
-0.9\t<unk>
-0.6\tgo\t-0.3
-0.6\tno\t-0.3
-0.5\tnow\t-0.3
-0.8\tnew\t-0.3

\\2-grams:
-0.2\tgo now
-1.4\tgo new
-0.3\tno now
-1.5\tno new

\\end\\
";

fn main() {
    let vocab = Vocabulary::new("gonew ").unwrap();
    let classes = vocab.size();
    let lm = NGramLM::parse_str(ARPA).unwrap();
    println!("loaded a {}-gram model", lm.order());
    println!("log10 P(now | go)  = {}", lm.log10_prob(&["go"], "now"));
    println!("log10 P(new | go)  = {}", lm.log10_prob(&["go"], "new"));
    // (new, now) is not in the bigram table: backoff(new) + P(now) = -0.3 - 0.5
    println!("log10 P(now | new) = {} (backoff)", lm.log10_prob(&["new"], "now"));

    // Acoustics say "go n?w" where the vowel is an even coin flip between
    // 'o' and 'e': "go now" and "go new" tie acoustically.
    let g = vocab.encode("g").unwrap()[0];
    let o = vocab.encode("o").unwrap()[0];
    let n = vocab.encode("n").unwrap()[0];
    let e = vocab.encode("e").unwrap()[0];
    let w = vocab.encode("w").unwrap()[0];
    let space = vocab.encode(" ").unwrap()[0];

    let mut lp = vec![-30.0f64; 7 * classes];
    let mut set = |t: usize, pairs: &[(usize, f64)]| {
        for &(v, p) in pairs {
            lp[t * classes + v] = p.ln();
        }
    };
    set(0, &[(g, 1.0)]);
    set(1, &[(o, 1.0)]);
    set(2, &[(space, 1.0)]);
    set(3, &[(n, 1.0)]);
    set(4, &[(o, 0.5), (e, 0.5)]); // the ambiguous vowel
    set(5, &[(w, 1.0)]);
    set(6, &[(vocab.blank_index(), 1.0)]);

    let acoustic_only = BeamConfig {
        beam_width: 16,
        alpha: 0.0,
        beta: 0.0,
    };
    println!("\nacoustic-only ranking:");
    for hyp in beam_search(&lp, 7, &vocab, None, &acoustic_only).unwrap().iter().take(3) {
        println!("  {:+.4}  {:?}", hyp.score, hyp.text);
    }

    let fused = BeamConfig {
        beam_width: 16,
        alpha: 1.2,
        beta: 0.5,
    };
    println!("\nwith bigram fusion (alpha=1.2, beta=0.5):");
    for hyp in beam_search(&lp, 7, &vocab, Some(&lm), &fused).unwrap().iter().take(3) {
        println!(
            "  {:+.4}  {:?}  (acoustic {:+.3}, lm log10 {:+.3}, {} words)",
            hyp.score, hyp.text, hyp.acoustic, hyp.lm_log10, hyp.words
        );
    }
}
