//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measurements (run with `--nocapture` to see them).
//!
//! Published word-error-rate results require multi-GPU, multi-day training
//! and are deliberately not tested here; criterion 10 checks that the
//! README says so. Everything else is verified against independent oracles
//! at the stated tolerances.

mod common;

use std::time::Instant;

use quartznet::ctc::{
    beam_search, ctc_loss, greedy_decode, min_frames, BeamConfig, Vocabulary,
};
use quartznet::frontend::{log_mel, mel_spectrogram, speed_perturb, AudioClip};
use quartznet::model::{count_params, AcousticModel, ConfigFile};
use quartznet::nn::{
    channel_shuffle, log_softmax_channels, BatchNorm1d, Conv1d, Mode, ResidualBlock, TcsConv,
};
use quartznet::rng::Rng;
use quartznet::synth::generate_tone_corpus;
use quartznet::tensor::{check_gradient, Tensor};
use quartznet::training::{
    evaluate, load_manifest, lr_at, train, Decoder, NovoGrad, ScheduleConfig, TrainOptions,
};

use common::*;

fn shipped_config(name: &str) -> ConfigFile {
    ConfigFile::load(workspace_root().join("configs").join(name)).unwrap()
}

#[test]
fn criterion_01_parameter_count_reproduction() {
    let start = Instant::now();
    let expected = [
        ("quartznet5x5.json", 6.7),
        ("quartznet10x5.json", 12.8),
        ("quartznet15x5.json", 18.9),
        ("quartznet15x5_g2.json", 12.1),
        ("quartznet15x5_g4.json", 8.7),
        ("wsj5x3.json", 6.4),
    ];
    for (file, published) in expected {
        let cfg = shipped_config(file);
        let report = count_params(&cfg.model).unwrap();
        assert_eq!(
            report.total_millions, published,
            "{file}: rounded {} vs published {published}",
            report.total_millions
        );
        let raw_m = report.total as f64 / 1e6;
        assert!(
            (raw_m - published).abs() <= 0.05,
            "{file}: raw {raw_m:.4}M vs published {published}M"
        );
        // The formula-based count must equal an enumeration of the built
        // model's parameter registry.
        let model = AcousticModel::<f32>::build(&cfg.model, 1).unwrap();
        assert_eq!(model.registry_param_count(), report.total, "{file}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:.2?}");
    // The counting itself (no model building) must be instant.
    let count_start = Instant::now();
    for (file, _) in expected {
        count_params(&shipped_config(file).model).unwrap();
    }
    let count_elapsed = count_start.elapsed();
    assert!(count_elapsed.as_secs_f64() < 1.0, "counting took {count_elapsed:.2?}");
    println!(
        "ACCEPTANCE 1 PASS: 6.7/12.8/18.9/12.1/8.7/6.4M all reproduced (counting {count_elapsed:.1?})"
    );
}

#[test]
fn criterion_02_ctc_matches_brute_force_path_sum() {
    let start = Instant::now();
    let mut rng = Rng::new(0xc7c);
    let mut checked = 0usize;

    let mut check = |frames: usize, classes: usize, target: &[usize], lp: &[f64]| {
        let blank = classes - 1;
        let out = ctc_loss(lp, frames, classes, target, blank).unwrap();
        let expect = brute_force_ctc_loss(lp, frames, classes, target, blank);
        if out.infeasible {
            assert!(expect > 1e29, "oracle found paths for an infeasible target");
        } else {
            assert!(
                (out.loss - expect).abs() < 1e-9,
                "T={frames} V={classes} target {target:?}: {} vs {expect}",
                out.loss
            );
        }
        checked += 1;
    };

    // Exhaustive small grid: every target up to length 2 over V-1 symbols.
    for frames in 1..=4 {
        for classes in 2..=3usize {
            let lp = random_log_probs(&mut rng, frames, classes);
            let symbols = classes - 1;
            let mut targets: Vec<Vec<usize>> = vec![vec![]];
            for a in 0..symbols {
                targets.push(vec![a]);
                for b in 0..symbols {
                    targets.push(vec![a, b]);
                }
            }
            for target in &targets {
                check(frames, classes, target, &lp);
            }
        }
    }

    // 200 random instances, T <= 6, L <= 3, V <= 4.
    for _ in 0..200 {
        let frames = 1 + rng.below(6);
        let classes = 2 + rng.below(3);
        let tlen = rng.below(4);
        let target: Vec<usize> = (0..tlen).map(|_| rng.below(classes - 1)).collect();
        let lp = random_log_probs(&mut rng, frames, classes);
        check(frames, classes, &target, &lp);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:.2?}");
    println!("ACCEPTANCE 2 PASS: {checked} instances match the path-sum oracle within 1e-9 ({elapsed:.1?})");
}

#[test]
fn criterion_03_analytic_gradients_match_finite_differences() {
    let start = Instant::now();
    let tol = 1e-5;
    let h = 1e-5;
    let mut rng = Rng::new(0x9aad);
    let mut report: Vec<(&str, f64)> = Vec::new();

    // conv1d (regular, strides and dilations mixed)
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (stride, dilation) = [(1, 1), (2, 1), (1, 2), (2, 2)][i % 4];
        let conv = Conv1d::<f64>::regular(3, 2, 3, stride, dilation, &mut rng).unwrap();
        let x0: Vec<f64> = (0..2 * 2 * 7).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let err = check_gradient(
            move |x| conv.forward(x)?.mul(&conv.forward(x)?)?.mean_all(),
            &x0,
            &[2, 2, 7],
            h,
        )
        .unwrap();
        worst = worst.max(err);
    }
    report.push(("conv1d", worst));

    // depthwise
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let conv = Conv1d::<f64>::depthwise(5, 3, 1, 1, &mut rng).unwrap();
        let x0: Vec<f64> = (0..2 * 3 * 6).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let err = check_gradient(
            move |x| conv.forward(x)?.mul(&conv.forward(x)?)?.mean_all(),
            &x0,
            &[2, 3, 6],
            h,
        )
        .unwrap();
        worst = worst.max(err);
    }
    report.push(("depthwise", worst));

    // grouped pointwise with shuffle
    let mut worst = 0.0f64;
    for i in 0..20 {
        let groups = [2, 4][i % 2];
        let conv = Conv1d::<f64>::pointwise(4, 8, groups, true, false, &mut rng).unwrap();
        let x0: Vec<f64> = (0..2 * 4 * 5).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let err = check_gradient(
            move |x| conv.forward(x)?.mul(&conv.forward(x)?)?.mean_all(),
            &x0,
            &[2, 4, 5],
            h,
        )
        .unwrap();
        worst = worst.max(err);
    }
    report.push(("grouped pointwise", worst));

    // batchnorm, train mode
    let mut worst = 0.0f64;
    for i in 0..20 {
        let seed_gamma = 0.5 + 0.1 * (i as f64);
        let x0: Vec<f64> = (0..2 * 2 * 5).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let err = check_gradient(
            move |x| {
                let bn = BatchNorm1d::<f64>::new(2).unwrap();
                bn.gamma.set_data(vec![seed_gamma, 1.2]);
                bn.beta.set_data(vec![0.1, -0.2]);
                let y = bn.forward(x, Mode::Train, None)?;
                y.mul(&y)?.mean_all()
            },
            &x0,
            &[2, 2, 5],
            h,
        )
        .unwrap();
        worst = worst.max(err);
    }
    report.push(("batchnorm(train)", worst));

    // residual block
    let mut worst = 0.0f64;
    for i in 0..20 {
        let groups = [1, 2][i % 2];
        let block = ResidualBlock::<f64>::new(2, 3, 2, 4, groups, true, 0.0, &mut rng).unwrap();
        let x0: Vec<f64> = (0..2 * 5).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let err = check_gradient(
            move |x| {
                let y = block.forward(x, None, Mode::Train, None)?;
                y.mul(&y)?.mean_all()
            },
            &x0,
            &[1, 2, 5],
            h,
        )
        .unwrap();
        worst = worst.max(err);
    }
    report.push(("residual block", worst));

    // log-softmax
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let w = Tensor::<f64>::rand_uniform(&[1, 4, 3], -1.0, 1.0, &mut rng);
        let x0: Vec<f64> = (0..4 * 3).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let err = check_gradient(
            move |x| {
                let weights = Tensor::from_vec(&[1, 4, 3], w.values())?;
                log_softmax_channels(x)?.mul(&weights)?.sum_all()
            },
            &x0,
            &[1, 4, 3],
            h,
        )
        .unwrap();
        worst = worst.max(err);
    }
    report.push(("log-softmax", worst));

    // CTC loss (finite differences on the pure function)
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 20 {
        let frames = 2 + rng.below(7);
        let classes = 3 + rng.below(2);
        let tlen = 1 + rng.below(3);
        let target: Vec<usize> = (0..tlen).map(|_| rng.below(classes - 1)).collect();
        if frames < min_frames(&target) {
            continue;
        }
        done += 1;
        let lp = random_log_probs(&mut rng, frames, classes);
        let out = ctc_loss(&lp, frames, classes, &target, classes - 1).unwrap();
        let fd_h = 1e-6;
        for i in 0..lp.len() {
            let mut plus = lp.clone();
            let mut minus = lp.clone();
            plus[i] += fd_h;
            minus[i] -= fd_h;
            let fp = ctc_loss(&plus, frames, classes, &target, classes - 1)
                .unwrap()
                .loss;
            let fm = ctc_loss(&minus, frames, classes, &target, classes - 1)
                .unwrap()
                .loss;
            let numeric = (fp - fm) / (2.0 * fd_h);
            let err = (out.grad[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    report.push(("ctc", worst));

    for (name, err) in &report {
        assert!(*err < tol, "{name}: max rel err {err:.3e} >= {tol:.0e}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:.2?}");
    let summary: Vec<String> = report
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect();
    println!(
        "ACCEPTANCE 3 PASS: max rel errs [{}] all below 1e-5 ({elapsed:.1?})",
        summary.join(", ")
    );
}

#[test]
fn criterion_04_separability_identity_over_the_grid() {
    let mut rng = Rng::new(0x5e9);
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    for kernel in 1..=8usize {
        for c_in in 1..=8usize {
            for c_out in 1..=8usize {
                let tcs = TcsConv::<f64>::new(kernel, c_in, c_out, 1, 1, 1, false, &mut rng)
                    .unwrap();
                let dw = tcs.depthwise.weight.values();
                let pw = tcs.pointwise.weight.values();
                // Rank-1 kernel W[k, c, o] = dw[c, k] * pw[o, c].
                let mut w = vec![0.0; c_out * c_in * kernel];
                for o in 0..c_out {
                    for c in 0..c_in {
                        for k in 0..kernel {
                            w[(o * c_in + c) * kernel + k] = dw[c * kernel + k] * pw[o * c_in + c];
                        }
                    }
                }
                let t = 16;
                let x = Tensor::<f64>::rand_uniform(&[1, c_in, t], -2.0, 2.0, &mut rng);
                let got = tcs.forward(&x).unwrap().values();
                let expect = naive_conv1d(&x.values(), &w, 1, c_in, c_out, t, kernel, 1, 1);
                let diff = max_abs_diff(&got, &expect);
                worst = worst.max(diff);
                cases += 1;
                assert!(
                    diff < 1e-10,
                    "K={kernel} c_in={c_in} c_out={c_out}: diff {diff:.3e}"
                );
            }
        }
    }
    println!("ACCEPTANCE 4 PASS: {cases} grid points, max abs diff {worst:.2e} < 1e-10");
}

#[test]
fn criterion_05_decoder_equivalences() {
    let vocab = Vocabulary::new("ab").unwrap();
    let mut rng = Rng::new(0xbea2);

    // beam_width = 1, no LM, beta = 0 equals greedy on 100 random lattices.
    let narrow = BeamConfig {
        beam_width: 1,
        alpha: 0.0,
        beta: 0.0,
    };
    for case in 0..100 {
        let frames = 1 + rng.below(20);
        let lp = random_log_probs(&mut rng, frames, vocab.size());
        let greedy = greedy_decode(&lp, frames, &vocab);
        let beam = beam_search(&lp, frames, &vocab, None, &narrow).unwrap();
        assert_eq!(beam[0].text, greedy, "case {case}");
    }

    // Exhaustive width equals the enumeration argmax for T=3, V=3.
    let wide = BeamConfig {
        beam_width: 27,
        alpha: 0.0,
        beta: 0.0,
    };
    let blank = vocab.blank_index();
    for case in 0..50 {
        let frames = 3;
        let classes = vocab.size();
        let lp = random_log_probs(&mut rng, frames, classes);
        let mut labelings: std::collections::HashMap<Vec<usize>, f64> =
            std::collections::HashMap::new();
        for code in 0..classes.pow(frames as u32) {
            let mut c = code;
            let mut logp = 0.0;
            let mut path = Vec::new();
            for t in 0..frames {
                let s = c % classes;
                c /= classes;
                logp += lp[t * classes + s];
                path.push(s);
            }
            let lab = collapse_path(&path, blank);
            let cur = labelings.get(&lab).copied().unwrap_or(LOG_ZERO);
            labelings.insert(lab, lse2(cur, logp));
        }
        let best = labelings
            .iter()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(a.0)))
            .unwrap();
        let beam = beam_search(&lp, frames, &vocab, None, &wide).unwrap();
        assert_eq!(beam[0].text, vocab.decode(best.0), "case {case}");
        assert!((beam[0].acoustic - best.1).abs() < 1e-9, "case {case}");
    }
    println!("ACCEPTANCE 5 PASS: beam(1) == greedy on 100 lattices; exhaustive beam == enumeration argmax on 50");
}

#[test]
fn criterion_06_shuffle_involution_and_identity() {
    let mut rng = Rng::new(0x5f);
    let mut pairs = 0usize;
    for channels in 1..=16usize {
        for groups in 1..=channels {
            if channels % groups != 0 {
                continue;
            }
            let x = Tensor::<f64>::rand_uniform(&[2, channels, 3], -1.0, 1.0, &mut rng);
            let once = channel_shuffle(&x, groups).unwrap();
            let back = channel_shuffle(&once, channels / groups).unwrap();
            assert_eq!(back.values(), x.values(), "C={channels} g={groups}");
            if groups == 1 {
                assert_eq!(once.values(), x.values(), "g=1 must be the identity");
            }
            pairs += 1;
        }
    }
    println!("ACCEPTANCE 6 PASS: shuffle involution holds for {pairs} divisor pairs with C <= 16");
}

#[test]
fn criterion_07_overfit_smoke_test() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_tone_corpus(dir.path().join("corpus")).unwrap();
    let entries = load_manifest(&manifest).unwrap();
    let config = shipped_config("tiny1x1.json");
    assert_eq!(config.model.name, "tiny1x1");

    let run = |out: &str| {
        let options = TrainOptions {
            seed: 42,
            out_dir: dir.path().join(out),
            init: None,
        };
        train::<f32>(&config, entries.clone(), dir.path().join("corpus"), &options).unwrap()
    };

    let (mut model, outcome) = run("a");
    let steps = outcome.records.len();
    assert!(steps <= 2000, "{steps} steps");
    let final_loss = outcome.records.last().unwrap().loss;
    assert!(final_loss < 0.1, "final loss {final_loss}");
    let first_below = outcome
        .records
        .iter()
        .find(|r| r.loss < 0.1)
        .map(|r| r.step)
        .unwrap();

    model.set_mode(Mode::Eval);
    let report = evaluate(&model, &entries, &dir.path().join("corpus"), &Decoder::Greedy).unwrap();
    assert_eq!(report.wer, 0.0, "greedy WER {:.2}%", report.wer * 100.0);

    // Bit-reproducibility: a second run must match exactly.
    let (model_b, outcome_b) = run("b");
    for ((name, a), (_, b)) in model.params().iter().zip(model_b.params().iter()) {
        assert_eq!(a.values(), b.values(), "{name} diverged between runs");
    }
    let losses_a: Vec<f64> = outcome.records.iter().map(|r| r.loss).collect();
    let losses_b: Vec<f64> = outcome_b.records.iter().map(|r| r.loss).collect();
    assert_eq!(losses_a, losses_b);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 300.0, "took {elapsed:.2?}");
    println!(
        "ACCEPTANCE 7 PASS: loss {final_loss:.4} (first < 0.1 at step {first_below}), WER 0%, two runs bit-identical ({elapsed:.1?} for both)"
    );
}

#[test]
fn criterion_08_schedule_endpoints_and_novograd_oracle() {
    let sc = ScheduleConfig {
        lr_max: 0.05,
        lr_min: 0.002,
        warmup_steps: 100,
        total_steps: 1000,
    };
    assert_eq!(lr_at(0, &sc), 0.0);
    assert_eq!(lr_at(100, &sc), 0.05);
    assert!((lr_at(1000, &sc) - 0.002).abs() < 1e-15);

    // NovoGrad against the scalar recursion oracle over a hyperparameter
    // grid (loss w^2/2, so g = w).
    let eps = 1e-8f64;
    let mut cases = 0usize;
    for beta1 in [0.0, 0.5, 0.95] {
        for beta2 in [0.25, 0.5, 0.9] {
            for lam in [0.0, 0.001, 0.01] {
                for lr in [0.1, 0.01] {
                    let params = vec![(
                        "w".to_string(),
                        Tensor::<f64>::param(&[1], vec![1.0]).unwrap(),
                    )];
                    let mut opt = NovoGrad::new(beta1, beta2, lam).unwrap();
                    let mut w_o = 1.0f64;
                    let mut v_o: Option<f64> = None;
                    let mut m_o = 0.0f64;
                    for _ in 0..5 {
                        let g = params[0].1.values()[0];
                        params[0].1.zero_grad();
                        params[0].1.accumulate_grad(&[g]);
                        opt.step(&params, lr, 1.0).unwrap();

                        let g_o = w_o;
                        let v_new = match v_o {
                            None => g_o * g_o,
                            Some(v) => beta2 * v + (1.0 - beta2) * g_o * g_o,
                        };
                        v_o = Some(v_new);
                        let ghat = g_o / (v_new.sqrt() + eps) + lam * w_o;
                        m_o = beta1 * m_o + ghat;
                        w_o -= lr * m_o;
                        let got = params[0].1.values()[0];
                        assert!(
                            (got - w_o).abs() < 1e-12,
                            "({beta1},{beta2},{lam},{lr}): {got} vs {w_o}"
                        );
                    }
                    cases += 1;
                }
            }
        }
    }
    println!("ACCEPTANCE 8 PASS: schedule endpoints exact; NovoGrad matches the oracle to 1e-12 on {cases} hyperparameter points");
}

#[test]
fn criterion_09_front_end_contracts() {
    // Frame-count formula: ceil(N / hop) exactly.
    for n in [1usize, 159, 160, 161, 8000, 15999, 16000, 16001] {
        let clip = AudioClip {
            samples: vec![0.1; n],
            sample_rate: 16000,
        };
        let fm = mel_spectrogram(&clip).unwrap();
        assert_eq!(fm.frames, n.div_ceil(160), "N={n}");
    }

    // 440 Hz sine: pipeline peak bin equals the DFT-oracle prediction.
    let clip = AudioClip {
        samples: (0..16000)
            .map(|i| 0.6 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16000.0).sin())
            .collect(),
        sample_rate: 16000,
    };
    let fm = log_mel(&clip).unwrap();
    let denorm = fm.denormalized();
    let pipeline_bin = (0..fm.mels)
        .map(|m| {
            let row: f64 = (0..fm.frames).map(|t| denorm[m * fm.frames + t]).sum();
            (m, row)
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
        .0;

    // Oracle: naive DFT of one Hann-windowed frame, then an independently
    // constructed triangle bank evaluated at the peak frequency.
    let win = 320;
    let frame: Vec<f64> = (0..win)
        .map(|i| {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos());
            clip.samples[8000 + i] * w
        })
        .collect();
    let mags = naive_dft_magnitude(&frame, 512);
    let peak_hz = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0 as f64
        * 16000.0
        / 512.0;
    let mel = |h: f64| 2595.0 * (1.0 + h / 700.0).log10();
    let imel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let pts: Vec<f64> = (0..66)
        .map(|i| imel(mel(8000.0) * i as f64 / 65.0))
        .collect();
    let oracle_bin = (0..64)
        .map(|m| {
            let rising = (peak_hz - pts[m]) / (pts[m + 1] - pts[m]);
            let falling = (pts[m + 2] - peak_hz) / (pts[m + 2] - pts[m + 1]);
            (m, rising.min(falling).max(0.0))
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(pipeline_bin, oracle_bin);

    // Speed perturbation length: round(N / factor) exactly.
    let n = 16000;
    let out = speed_perturb(&clip, 1.1).unwrap();
    assert_eq!(out.samples.len(), (n as f64 / 1.1).round() as usize);
    assert_eq!(out.samples.len(), 14545);

    println!(
        "ACCEPTANCE 9 PASS: frame counts exact, 440 Hz peak in mel bin {pipeline_bin} (oracle {oracle_bin}), speed 1.1 length 14545"
    );
}

#[test]
fn criterion_10_wer_non_reproduction_is_documented() {
    let readme = std::fs::read_to_string(workspace_root().join("README.md")).unwrap();
    let lower = readme.to_lowercase();
    assert!(
        lower.contains("not") && lower.contains("wer"),
        "README must state that published WER results are out of scope"
    );
    assert!(
        lower.contains("multi-gpu") || lower.contains("multi gpu"),
        "README must explain why (multi-GPU scale training)"
    );
    assert!(
        lower.contains("3.90") || lower.contains("parameter"),
        "README must point at the substitute checks"
    );
    println!("ACCEPTANCE 10 PASS: README documents the WER non-reproduction and the substitute criteria");
}
