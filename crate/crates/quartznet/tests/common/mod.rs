//! Independent oracles shared by the integration suites. Everything here
//! is a direct transcription of a definition, kept deliberately separate
//! from the implementation paths it checks.

// Each integration test target compiles this module and uses its own
// subset of the helpers.
#![allow(dead_code)]

use quartznet::rng::Rng;

pub const LOG_ZERO: f64 = -1e30;

pub fn lse2(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO && b <= LOG_ZERO {
        return LOG_ZERO;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Normalized random log-probability rows, `[frames, classes]`.
pub fn random_log_probs(rng: &mut Rng, frames: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; frames * classes];
    for t in 0..frames {
        let logits: Vec<f64> = (0..classes).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
        for (v, &l) in logits.iter().enumerate() {
            out[t * classes + v] = l - mx - z.ln();
        }
    }
    out
}

/// CTC path collapse: merge adjacent repeats, then drop blanks.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = usize::MAX;
    for &v in path {
        if v != prev && v != blank {
            out.push(v);
        }
        prev = v;
    }
    out
}

/// Brute-force CTC loss: enumerate every classes^frames path, collapse,
/// and sum the probabilities of paths matching the target.
pub fn brute_force_ctc_loss(
    log_probs: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
    blank: usize,
) -> f64 {
    let mut total = LOG_ZERO;
    let paths = (classes as u64).pow(frames as u32);
    for code in 0..paths {
        let mut c = code;
        let mut logp = 0.0;
        let mut path = Vec::with_capacity(frames);
        for t in 0..frames {
            let v = (c % classes as u64) as usize;
            c /= classes as u64;
            logp += log_probs[t * classes + v];
            path.push(v);
        }
        if collapse_path(&path, blank) == target {
            total = lse2(total, logp);
        }
    }
    -total
}

/// Direct triple-loop 1D convolution with same-style padding,
/// `T_out = ceil(T / stride)`. Weight layout `[c_out, c_in, k]`.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv1d(
    x: &[f64],
    w: &[f64],
    batch: usize,
    c_in: usize,
    c_out: usize,
    t_in: usize,
    kernel: usize,
    stride: usize,
    dilation: usize,
) -> Vec<f64> {
    let t_out = t_in.div_ceil(stride);
    let pad_left = dilation * (kernel - 1) / 2;
    let mut out = vec![0.0; batch * c_out * t_out];
    for b in 0..batch {
        for o in 0..c_out {
            for t in 0..t_out {
                let mut acc = 0.0;
                for c in 0..c_in {
                    for k in 0..kernel {
                        let ti = (t * stride + k * dilation) as isize - pad_left as isize;
                        if ti >= 0 && (ti as usize) < t_in {
                            acc += w[(o * c_in + c) * kernel + k]
                                * x[(b * c_in + c) * t_in + ti as usize];
                        }
                    }
                }
                out[(b * c_out + o) * t_out + t] = acc;
            }
        }
    }
    out
}

/// O(n^2) DFT magnitude bins `0..=n_fft/2`.
pub fn naive_dft_magnitude(x: &[f64], n_fft: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    (0..=n_fft / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Workspace root (the crate lives under `crates/quartznet`).
pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .expect("crate sits two levels under the workspace root")
        .to_path_buf()
}
