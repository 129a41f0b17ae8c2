//! Verify every layer's analytic gradient against central finite
//! differences at 64-bit precision.
//!
//!     cargo run --release -p quartznet --example gradient_check

use quartznet::ctc::{ctc_loss, min_frames};
use quartznet::nn::{
    log_softmax_channels, BatchNorm1d, Conv1d, Mode, ResidualBlock,
};
use quartznet::rng::Rng;
use quartznet::tensor::{check_gradient, Tensor};

fn random_log_probs(rng: &mut Rng, frames: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; frames * classes];
    for t in 0..frames {
        let logits: Vec<f64> = (0..classes).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        for (v, &l) in logits.iter().enumerate() {
            out[t * classes + v] = l - mx - z.ln();
        }
    }
    out
}

fn main() {
    let mut rng = Rng::new(2024);
    let h = 1e-5;

    let conv = Conv1d::<f64>::regular(5, 3, 4, 2, 1, &mut rng).unwrap();
    let x0: Vec<f64> = (0..2 * 3 * 9).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let err = check_gradient(
        move |x| conv.forward(x)?.mul(&conv.forward(x)?)?.mean_all(),
        &x0,
        &[2, 3, 9],
        h,
    )
    .unwrap();
    println!("conv1d (K=5, stride 2)           rel err {err:.2e}");

    let dw = Conv1d::<f64>::depthwise(7, 4, 1, 1, &mut rng).unwrap();
    let x0: Vec<f64> = (0..4 * 8).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let err = check_gradient(
        move |x| dw.forward(x)?.mul(&dw.forward(x)?)?.mean_all(),
        &x0,
        &[1, 4, 8],
        h,
    )
    .unwrap();
    println!("depthwise conv1d (K=7)           rel err {err:.2e}");

    let pw = Conv1d::<f64>::pointwise(4, 8, 2, true, false, &mut rng).unwrap();
    let x0: Vec<f64> = (0..4 * 6).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let err = check_gradient(
        move |x| pw.forward(x)?.mul(&pw.forward(x)?)?.mean_all(),
        &x0,
        &[1, 4, 6],
        h,
    )
    .unwrap();
    println!("grouped pointwise + shuffle      rel err {err:.2e}");

    let x0: Vec<f64> = (0..2 * 2 * 5).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let err = check_gradient(
        |x| {
            let bn = BatchNorm1d::<f64>::new(2).unwrap();
            bn.gamma.set_data(vec![1.3, 0.7]);
            bn.beta.set_data(vec![0.1, -0.2]);
            let y = bn.forward(x, Mode::Train, None)?;
            y.mul(&y)?.mean_all()
        },
        &x0,
        &[2, 2, 5],
        h,
    )
    .unwrap();
    println!("batch norm (train mode)          rel err {err:.2e}");

    let block = ResidualBlock::<f64>::new(3, 3, 2, 4, 2, true, 0.0, &mut rng).unwrap();
    let x0: Vec<f64> = (0..2 * 6).map(|_| rng.uniform(-1.5, 1.5)).collect();
    let err = check_gradient(
        move |x| {
            let y = block.forward(x, None, Mode::Train, None)?;
            y.mul(&y)?.mean_all()
        },
        &x0,
        &[1, 2, 6],
        h,
    )
    .unwrap();
    println!("residual block (R=3, g=2)        rel err {err:.2e}");

    let w = Tensor::<f64>::rand_uniform(&[1, 5, 4], -1.0, 1.0, &mut rng);
    let x0: Vec<f64> = (0..5 * 4).map(|_| rng.uniform(-2.0, 2.0)).collect();
    let err = check_gradient(
        move |x| {
            let weights = Tensor::from_vec(&[1, 5, 4], w.values())?;
            log_softmax_channels(x)?.mul(&weights)?.sum_all()
        },
        &x0,
        &[1, 5, 4],
        h,
    )
    .unwrap();
    println!("log-softmax                      rel err {err:.2e}");

    // CTC: finite differences on the loss function directly.
    let (frames, classes) = (7, 4);
    let target = vec![0usize, 2, 1];
    assert!(frames >= min_frames(&target));
    let lp = random_log_probs(&mut rng, frames, classes);
    let out = ctc_loss(&lp, frames, classes, &target, classes - 1).unwrap();
    let fd_h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..lp.len() {
        let mut plus = lp.clone();
        let mut minus = lp.clone();
        plus[i] += fd_h;
        minus[i] -= fd_h;
        let fp = ctc_loss(&plus, frames, classes, &target, classes - 1).unwrap().loss;
        let fm = ctc_loss(&minus, frames, classes, &target, classes - 1).unwrap().loss;
        let numeric = (fp - fm) / (2.0 * fd_h);
        worst = worst.max((out.grad[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    println!("ctc loss (T=7, L=3)              rel err {worst:.2e}");
}
