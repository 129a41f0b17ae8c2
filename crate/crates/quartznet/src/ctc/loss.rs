//! CTC loss via the forward-backward recursion, with analytic gradients.
//!
//! The loss of a `[T, V]` grid of per-frame log class probabilities against
//! a target symbol sequence is `-log` of the summed probability of every
//! frame-level path that collapses (merge repeats, drop blanks) to the
//! target. Both DP passes run in the log domain over the extended target
//! `blank t_1 blank t_2 ... blank`; alpha and beta each include the emission
//! of their own frame, so the total log probability can be read off either
//! table and the two must agree.
//!
//! The gradient with respect to the log probabilities is the negative state
//! posterior summed per class: `d loss / d lp[t, v] = -sum_{s: z_s = v}
//! gamma_t(s)`, which the training wrapper feeds straight into the autodiff
//! graph.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Log-domain floor standing in for log(0); keeps the recursion finite in
/// both f32 and f64.
pub const LOG_ZERO: f64 = -1e30;

fn lse2(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO && b <= LOG_ZERO {
        return LOG_ZERO;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// DP tables for one utterance.
#[derive(Debug, Clone)]
pub struct CtcLattice {
    /// Target with blanks interleaved, length 2L+1.
    pub extended: Vec<usize>,
    /// `[T, 2L+1]` log-domain forward table (emission-inclusive).
    pub alpha: Vec<f64>,
    /// `[T, 2L+1]` log-domain backward table (emission-inclusive).
    pub beta: Vec<f64>,
    pub frames: usize,
    /// `-log P(target)` read from the final alpha states.
    pub loss_from_alpha: f64,
    /// `-log P(target)` read from the initial beta states.
    pub loss_from_beta: f64,
}

/// Loss, gradient and diagnostics for one utterance.
#[derive(Debug)]
pub struct CtcOutput {
    pub loss: f64,
    /// `[T, V]` gradient with respect to the input log probabilities.
    pub grad: Vec<f64>,
    /// Target cannot be emitted in the given number of frames; loss is
    /// `+inf` and the gradient is zero.
    pub infeasible: bool,
    pub lattice: Option<CtcLattice>,
}

/// Number of frames required: target length plus one per adjacent repeat.
pub fn min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

/// CTC loss and gradient for a single utterance.
///
/// `log_probs` is `[frames, classes]` row-major and should hold normalized
/// log probabilities. Targets must not contain the blank class.
pub fn ctc_loss(
    log_probs: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
    blank: usize,
) -> Result<CtcOutput> {
    if log_probs.len() != frames * classes {
        return Err(Error::Shape(format!(
            "log_probs has {} values, expected {} x {}",
            log_probs.len(),
            frames,
            classes
        )));
    }
    if frames == 0 {
        return Err(Error::Contract("ctc_loss needs at least one frame".into()));
    }
    for &s in target {
        if s == blank {
            return Err(Error::Contract(
                "target symbols must not include the blank".into(),
            ));
        }
        if s >= classes {
            return Err(Error::Contract(format!(
                "target symbol {s} out of range for {classes} classes"
            )));
        }
    }

    if frames < min_frames(target) {
        return Ok(CtcOutput {
            loss: f64::INFINITY,
            grad: vec![0.0; frames * classes],
            infeasible: true,
            lattice: None,
        });
    }

    // Extended target: blank, t1, blank, t2, ..., blank.
    let l = target.len();
    let s_len = 2 * l + 1;
    let mut ext = vec![blank; s_len];
    for (i, &t) in target.iter().enumerate() {
        ext[2 * i + 1] = t;
    }

    let lp = |t: usize, v: usize| log_probs[t * classes + v];

    let mut alpha = vec![LOG_ZERO; frames * s_len];
    alpha[0] = lp(0, blank);
    if s_len > 1 {
        alpha[1] = lp(0, ext[1]);
    }
    for t in 1..frames {
        let (prev_rows, rest) = alpha.split_at_mut(t * s_len);
        let prev = &prev_rows[(t - 1) * s_len..];
        let row = &mut rest[..s_len];
        for s in 0..s_len {
            let mut acc = prev[s];
            if s >= 1 {
                acc = lse2(acc, prev[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = lse2(acc, prev[s - 2]);
            }
            row[s] = if acc <= LOG_ZERO {
                LOG_ZERO
            } else {
                acc + lp(t, ext[s])
            };
        }
    }

    let last = (frames - 1) * s_len;
    let log_p_alpha = if s_len > 1 {
        lse2(alpha[last + s_len - 1], alpha[last + s_len - 2])
    } else {
        alpha[last + s_len - 1]
    };

    let mut beta = vec![LOG_ZERO; frames * s_len];
    beta[last + s_len - 1] = lp(frames - 1, blank);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(frames - 1, ext[s_len - 2]);
    }
    for t in (0..frames - 1).rev() {
        let (head, tail) = beta.split_at_mut((t + 1) * s_len);
        let row = &mut head[t * s_len..];
        let next = &tail[..s_len];
        for s in 0..s_len {
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = lse2(acc, next[s + 1]);
            }
            if s + 2 < s_len && ext[s + 2] != blank && ext[s + 2] != ext[s] {
                acc = lse2(acc, next[s + 2]);
            }
            row[s] = if acc <= LOG_ZERO {
                LOG_ZERO
            } else {
                acc + lp(t, ext[s])
            };
        }
    }

    let log_p_beta = if s_len > 1 {
        lse2(beta[0], beta[1])
    } else {
        beta[0]
    };

    // gamma_t(s) = alpha * beta / (emission at t, counted twice) / P
    let mut grad = vec![0.0; frames * classes];
    for t in 0..frames {
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a <= LOG_ZERO || b <= LOG_ZERO {
                continue;
            }
            let log_gamma = a + b - lp(t, ext[s]) - log_p_alpha;
            grad[t * classes + ext[s]] -= log_gamma.exp();
        }
    }

    Ok(CtcOutput {
        loss: -log_p_alpha,
        grad,
        infeasible: false,
        lattice: Some(CtcLattice {
            extended: ext,
            alpha,
            beta,
            frames,
            loss_from_alpha: -log_p_alpha,
            loss_from_beta: -log_p_beta,
        }),
    })
}

/// Batch diagnostics from [`ctc_loss_batch`].
#[derive(Debug, Clone)]
pub struct CtcBatchStats {
    pub per_utterance: Vec<f64>,
    pub feasible: usize,
    pub infeasible: usize,
}

/// Mean per-utterance CTC loss over a `[B, T, V]` log-probability tensor,
/// wired into the autodiff graph.
///
/// Frames at or beyond each utterance's `out_length` are ignored entirely.
/// Infeasible utterances are skipped and counted, not fatal; if every
/// utterance is infeasible the returned loss is a detached zero with
/// `feasible == 0`.
pub fn ctc_loss_batch<E: Element>(
    log_probs: &Tensor<E>,
    targets: &[Vec<usize>],
    out_lengths: &[usize],
    blank: usize,
) -> Result<(Tensor<E>, CtcBatchStats)> {
    let shape = log_probs.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "ctc_loss_batch expects [B, T, V], got {shape:?}"
        )));
    }
    let (batch, t_max, classes) = (shape[0], shape[1], shape[2]);
    if targets.len() != batch || out_lengths.len() != batch {
        return Err(Error::Shape(format!(
            "batch {batch} with {} targets and {} lengths",
            targets.len(),
            out_lengths.len()
        )));
    }

    let values = log_probs.values_f64();
    let mut per_utt = Vec::with_capacity(batch);
    let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(batch);
    let mut feasible = 0usize;
    let mut total = 0.0f64;

    for b in 0..batch {
        let frames = out_lengths[b].min(t_max);
        if frames == 0 {
            return Err(Error::Contract(format!(
                "utterance {b} has zero output frames"
            )));
        }
        let slice = &values[b * t_max * classes..b * t_max * classes + frames * classes];
        let out = ctc_loss(slice, frames, classes, &targets[b], blank)?;
        per_utt.push(out.loss);
        if out.infeasible {
            grads.push(None);
        } else {
            feasible += 1;
            total += out.loss;
            grads.push(Some(out.grad));
        }
    }

    let stats = CtcBatchStats {
        per_utterance: per_utt,
        feasible,
        infeasible: batch - feasible,
    };

    if feasible == 0 {
        return Ok((Tensor::scalar(E::ZERO), stats));
    }

    let mean = total / feasible as f64;
    let scale = 1.0 / feasible as f64;
    let loss = Tensor::from_op(
        Vec::new(),
        vec![E::from_f64(mean)],
        vec![log_probs.clone()],
        move |g, parents, sink| {
            let gscale = g[0].to_f64() * scale;
            let mut gx = vec![E::ZERO; parents[0].numel()];
            for (b, per) in grads.iter().enumerate() {
                let Some(per) = per else { continue };
                let base = b * t_max * classes;
                for (i, &v) in per.iter().enumerate() {
                    gx[base + i] = E::from_f64(v * gscale);
                }
            }
            sink.add(&parents[0], gx);
        },
    );
    Ok((loss, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Random normalized log-probability rows.
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

    /// Brute force: enumerate all class^frames paths, collapse each, and sum
    /// the probability of the ones matching the target.
    fn brute_force_loss(
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
            let mut collapsed = Vec::new();
            let mut prev = usize::MAX;
            for t in 0..frames {
                let v = (c % classes as u64) as usize;
                c /= classes as u64;
                logp += log_probs[t * classes + v];
                if v != prev && v != blank {
                    collapsed.push(v);
                }
                prev = v;
            }
            if collapsed == target {
                total = lse2(total, logp);
            }
        }
        -total
    }

    #[test]
    fn single_frame_uniform_is_log_classes() {
        // T=1, V=3 uniform, target "a" -> loss = ln 3
        let lp = vec![(1.0f64 / 3.0).ln(); 3];
        let out = ctc_loss(&lp, 1, 3, &[0], 2).unwrap();
        assert!((out.loss - 3.0f64.ln()).abs() < 1e-12);
        let lat = out.lattice.unwrap();
        assert!((lat.loss_from_alpha - lat.loss_from_beta).abs() < 1e-12);
    }

    #[test]
    fn infeasible_target_flags_and_infinite_loss() {
        let lp = vec![(1.0f64 / 3.0).ln(); 3];
        let out = ctc_loss(&lp, 1, 3, &[0, 1], 2).unwrap();
        assert!(out.infeasible);
        assert!(out.loss.is_infinite());
        assert!(out.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn repeat_needs_separating_frame() {
        assert_eq!(min_frames(&[0, 0]), 3);
        assert_eq!(min_frames(&[0, 1, 1, 0]), 5);
        let lp = vec![(1.0f64 / 3.0).ln(); 6];
        assert!(ctc_loss(&lp, 2, 3, &[0, 0], 2).unwrap().infeasible);
    }

    #[test]
    fn blank_in_target_is_contract_error() {
        let lp = vec![0.25f64.ln(); 8];
        assert!(matches!(
            ctc_loss(&lp, 2, 4, &[3], 3),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn matches_brute_force_enumeration() {
        let mut rng = Rng::new(0x5eed);
        for case in 0..60 {
            let frames = 1 + rng.below(6);
            let classes = 2 + rng.below(3);
            let blank = classes - 1;
            let tlen = rng.below(4).min(frames);
            let target: Vec<usize> = (0..tlen).map(|_| rng.below(classes - 1)).collect();
            let lp = random_log_probs(&mut rng, frames, classes);
            let out = ctc_loss(&lp, frames, classes, &target, blank).unwrap();
            let expect = brute_force_loss(&lp, frames, classes, &target, blank);
            if out.infeasible {
                assert!(expect > 1e29, "case {case}: oracle found a path");
                continue;
            }
            assert!(
                (out.loss - expect).abs() < 1e-9,
                "case {case}: {} vs {}",
                out.loss,
                expect
            );
            let lat = out.lattice.unwrap();
            assert!(
                (lat.loss_from_alpha - lat.loss_from_beta).abs() < 1e-9,
                "case {case}: alpha/beta disagree"
            );
        }
    }

    #[test]
    fn posterior_rows_sum_to_one() {
        // The gradient is the negative symbol posterior, so each frame's
        // gradient sums to -1 on feasible instances.
        let mut rng = Rng::new(77);
        let lp = random_log_probs(&mut rng, 5, 4);
        let out = ctc_loss(&lp, 5, 4, &[0, 2], 3).unwrap();
        for t in 0..5 {
            let row: f64 = out.grad[t * 4..(t + 1) * 4].iter().sum();
            assert!((row + 1.0).abs() < 1e-9, "frame {t}: {row}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(33);
        for _ in 0..10 {
            let frames = 2 + rng.below(7);
            let classes = 3 + rng.below(2);
            let blank = classes - 1;
            let tlen = 1 + rng.below(3.min(frames));
            let target: Vec<usize> = (0..tlen).map(|_| rng.below(classes - 1)).collect();
            if frames < min_frames(&target) {
                continue;
            }
            let lp = random_log_probs(&mut rng, frames, classes);
            let out = ctc_loss(&lp, frames, classes, &target, blank).unwrap();
            let h = 1e-6;
            for i in 0..lp.len() {
                let mut plus = lp.clone();
                let mut minus = lp.clone();
                plus[i] += h;
                minus[i] -= h;
                let fp = ctc_loss(&plus, frames, classes, &target, blank)
                    .unwrap()
                    .loss;
                let fm = ctc_loss(&minus, frames, classes, &target, blank)
                    .unwrap()
                    .loss;
                let numeric = (fp - fm) / (2.0 * h);
                let err = (out.grad[i] - numeric).abs() / numeric.abs().max(1.0);
                assert!(err < 1e-5, "coordinate {i}: rel err {err}");
            }
        }
    }

    #[test]
    fn exp_minus_loss_is_a_probability() {
        let mut rng = Rng::new(11);
        for _ in 0..20 {
            let lp = random_log_probs(&mut rng, 4, 3);
            let out = ctc_loss(&lp, 4, 3, &[0], 2).unwrap();
            let p = (-out.loss).exp();
            assert!(p > 0.0 && p <= 1.0 + 1e-12, "p = {p}");
        }
    }

    #[test]
    fn forced_alignment_has_probability_one() {
        // T == L with deterministic frames: only one path exists.
        let mut lp = vec![LOG_ZERO; 2 * 3];
        lp[0] = 0.0; // frame 0 emits class 0
        lp[3 + 1] = 0.0; // frame 1 emits class 1
        let out = ctc_loss(&lp, 2, 3, &[0, 1], 2).unwrap();
        assert!(out.loss.abs() < 1e-9);
        assert!(((-out.loss).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_wrapper_masks_padding_and_averages() {
        let classes = 3;
        let mut rng = Rng::new(5);
        let a = random_log_probs(&mut rng, 4, classes);
        let b = random_log_probs(&mut rng, 2, classes);
        // Pad utterance b to 4 frames with garbage that must not matter.
        let mut padded = b.clone();
        padded.extend(vec![9.9; 2 * classes]);
        let mut all = a.clone();
        all.extend(padded);
        let t = Tensor::<f64>::param(&[2, 4, classes], all).unwrap();
        let (loss, stats) =
            ctc_loss_batch(&t, &[vec![0], vec![1]], &[4, 2], classes - 1).unwrap();
        let la = ctc_loss(&a, 4, classes, &[0], classes - 1).unwrap().loss;
        let lb = ctc_loss(&b, 2, classes, &[1], classes - 1).unwrap().loss;
        assert!((loss.item() - (la + lb) / 2.0).abs() < 1e-12);
        assert_eq!(stats.feasible, 2);
        loss.backward().unwrap();
        let g = t.grad().unwrap();
        // Gradient over utterance b's padding frames must be exactly zero.
        for &gv in &g[4 * classes + 2 * classes..8 * classes] {
            assert_eq!(gv, 0.0);
        }
    }

    #[test]
    fn all_infeasible_batch_detaches() {
        let lp = vec![(1.0f64 / 3.0).ln(); 3];
        let t = Tensor::<f64>::param(&[1, 1, 3], lp).unwrap();
        let (loss, stats) = ctc_loss_batch(&t, &[vec![0, 1]], &[1], 2).unwrap();
        assert_eq!(stats.feasible, 0);
        assert_eq!(stats.infeasible, 1);
        assert_eq!(loss.item(), 0.0);
        assert!(!loss.needs_grad());
    }
}
