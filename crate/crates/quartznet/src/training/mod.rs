//! The CTC training loop, evaluation and single-file transcription.

mod data;
mod novograd;
mod schedule;

pub use data::{load_manifest, Batch, DataPipeline, ManifestEntry};
pub use novograd::NovoGrad;
pub use schedule::{lr_at, ScheduleConfig};

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::ctc::{
    beam_search, char_error_rate, ctc_loss_batch, greedy_decode, word_error_rate, BeamConfig,
    NGramLM,
};
use crate::error::{Error, Result};
use crate::frontend::{load_wav, log_mel, AudioClip};
use crate::model::{load_checkpoint, save_checkpoint, AcousticModel, ConfigFile, TrainerState};
use crate::nn::Mode;
use crate::rng::Rng;
use crate::tensor::{no_grad, Element, Tensor};

/// Weight initialization source for a training run.
#[derive(Debug, Clone)]
pub enum InitFrom {
    /// Load weights, fresh optimizer, step 0 (the fine-tuning path).
    FineTune {
        checkpoint: PathBuf,
        reinit_head: bool,
    },
    /// Restore weights, optimizer state and step counter exactly.
    Resume { checkpoint: PathBuf },
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub init: Option<InitFrom>,
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
    /// Utterances skipped in this batch because the target cannot fit.
    pub skipped: usize,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub skipped_total: usize,
}

fn global_grad_norm<E: Element>(params: &[(String, Tensor<E>)]) -> f64 {
    let mut total = 0.0f64;
    for (_, p) in params {
        if let Some(g) = p.grad() {
            for v in g {
                let v = v.to_f64();
                total += v * v;
            }
        }
    }
    total.sqrt()
}

/// Train a model according to the config file's `training` section.
///
/// The run is bit-reproducible for a given (seed, config, data) triple:
/// batch order, dropout, augmentation and initialization all derive from
/// the seed, and resuming from a checkpoint replays the identical
/// trajectory.
pub fn train<E: Element>(
    config: &ConfigFile,
    entries: Vec<ManifestEntry>,
    base_dir: impl Into<PathBuf>,
    options: &TrainOptions,
) -> Result<(AcousticModel<E>, TrainOutcome)> {
    let run = &config.training;
    std::fs::create_dir_all(&options.out_dir)?;

    let mut model: AcousticModel<E>;
    let mut optimizer = NovoGrad::new(run.beta1, run.beta2, run.weight_decay)?;
    let mut start_step = 0usize;

    match &options.init {
        None => {
            model = AcousticModel::build(&config.model, options.seed)?;
        }
        Some(InitFrom::FineTune {
            checkpoint,
            reinit_head,
        }) => {
            let (m, _) =
                load_checkpoint::<E>(checkpoint, Some(&config.model), *reinit_head, options.seed)?;
            model = m;
        }
        Some(InitFrom::Resume { checkpoint }) => {
            let (m, raw) =
                load_checkpoint::<E>(checkpoint, Some(&config.model), false, options.seed)?;
            model = m;
            let state = raw.trainer.ok_or_else(|| {
                Error::Config("checkpoint has no trainer state to resume from".into())
            })?;
            start_step = state.step;
            let params = model.params();
            optimizer.restore(
                &params,
                |name| raw.tensor(name).map(|(_, v)| v.clone()),
                state.step,
            )?;
        }
    }
    model.set_mode(Mode::Train);

    let mut pipeline = DataPipeline::new(
        entries,
        base_dir,
        model.vocab.clone(),
        run.batch_size,
        options.seed,
        run.augment.clone(),
    )?;
    let bpe = pipeline.batches_per_epoch();
    let total_steps = run.total_steps.unwrap_or(run.epochs.max(1) * bpe);
    let schedule = ScheduleConfig {
        lr_max: run.lr,
        lr_min: run.lr_min,
        warmup_steps: run.warmup_steps.min(total_steps.saturating_sub(1)),
        total_steps,
    };
    schedule.validate()?;

    let log_path = options.out_dir.join("train_log.jsonl");
    let mut log = std::fs::File::create(&log_path)?;
    let mut records = Vec::new();
    let mut skipped_total = 0usize;
    let mut step = start_step;
    let start_epoch = start_step / bpe;
    let start_offset = start_step % bpe;

    for epoch in start_epoch..run.epochs {
        let batches = pipeline.epoch_batches(epoch)?;
        for (bi, batch) in batches.iter().enumerate() {
            if epoch == start_epoch && bi < start_offset {
                continue;
            }
            step += 1;
            let lr = lr_at(step, &schedule);

            let feats = batch.to_tensor::<E>()?;
            let mut dropout_rng = Rng::derive(options.seed, "dropout", step as u64);
            let (log_probs, out_lens) =
                model.forward(&feats, &batch.feat_lengths, Some(&mut dropout_rng))?;
            let (loss, stats) = ctc_loss_batch(
                &log_probs,
                &batch.targets,
                &out_lens,
                model.vocab.blank_index(),
            )?;
            skipped_total += stats.infeasible;

            if stats.feasible == 0 {
                let record = StepRecord {
                    step,
                    epoch,
                    lr,
                    loss: f64::INFINITY,
                    grad_norm: 0.0,
                    skipped: stats.infeasible,
                };
                write_log_line(&mut log, &record)?;
                records.push(record);
                continue;
            }

            let loss_value = loss.item().to_f64();
            if !loss_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss_value} at step {step}"
                )));
            }

            model.zero_grads();
            loss.backward()?;
            let params = model.params();
            let grad_norm = global_grad_norm(&params);
            let grad_scale = if run.grad_clip > 0.0 && grad_norm > run.grad_clip {
                run.grad_clip / grad_norm
            } else {
                1.0
            };
            optimizer.step(&params, lr, grad_scale)?;

            let record = StepRecord {
                step,
                epoch,
                lr,
                loss: loss_value,
                grad_norm,
                skipped: stats.infeasible,
            };
            write_log_line(&mut log, &record)?;
            records.push(record);

            if run.checkpoint_every > 0 && step.is_multiple_of(run.checkpoint_every) {
                let path = options.out_dir.join(format!("step{step}.ckpt"));
                let extra = optimizer.export(&params);
                save_checkpoint(&model, &path, Some(TrainerState { step, epoch }), &extra)?;
            }
        }
    }

    let final_checkpoint = options.out_dir.join("final.ckpt");
    let params = model.params();
    let extra = optimizer.export(&params);
    save_checkpoint(
        &model,
        &final_checkpoint,
        Some(TrainerState {
            step,
            epoch: run.epochs,
        }),
        &extra,
    )?;

    Ok((
        model,
        TrainOutcome {
            records,
            final_checkpoint,
            log_path,
            skipped_total,
        },
    ))
}

fn write_log_line(file: &mut std::fs::File, record: &StepRecord) -> Result<()> {
    // Timestamps live only in the `ts` field so logs stay comparable.
    let ts = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut value = serde_json::to_value(record)?;
    value["ts"] = serde_json::Value::from(ts);
    writeln!(file, "{}", serde_json::to_string(&value)?)?;
    Ok(())
}

/// Decoding strategy for evaluation and transcription.
pub enum Decoder {
    Greedy,
    Beam {
        config: BeamConfig,
        lm: Option<NGramLM>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct UtteranceReport {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub word_errors: usize,
    pub word_count: usize,
    pub wer: f64,
    pub cer: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Corpus WER: total word edits over total reference words.
    pub wer: f64,
    pub cer: f64,
    pub utterances: Vec<UtteranceReport>,
}

/// Extract one utterance's `[frames, V]` log probabilities as f64 rows.
pub fn utterance_log_probs<E: Element>(
    log_probs: &Tensor<E>,
    b: usize,
    frames: usize,
) -> Vec<f64> {
    let shape = log_probs.shape();
    let (t_max, classes) = (shape[1], shape[2]);
    let data = log_probs.data();
    let base = b * t_max * classes;
    data[base..base + frames * classes]
        .iter()
        .map(|v| v.to_f64())
        .collect()
}

fn decode_utterance<E: Element>(
    model: &AcousticModel<E>,
    clip: &AudioClip,
    decoder: &Decoder,
) -> Result<String> {
    let fm = log_mel(clip)?;
    let feats = Tensor::<E>::from_vec(
        &[1, fm.mels, fm.frames],
        fm.values.iter().map(|&v| E::from_f64(v)).collect(),
    )?;
    let (log_probs, out_lens) = no_grad(|| model.forward(&feats, &[fm.frames], None))?;
    let rows = utterance_log_probs(&log_probs, 0, out_lens[0]);
    match decoder {
        Decoder::Greedy => Ok(greedy_decode(&rows, out_lens[0], &model.vocab)),
        Decoder::Beam { config, lm } => {
            let hyps = beam_search(&rows, out_lens[0], &model.vocab, lm.as_ref(), config)?;
            Ok(hyps.first().map(|h| h.text.clone()).unwrap_or_default())
        }
    }
}

/// Transcribe one WAV file with the model's front-end contract.
pub fn transcribe_file<E: Element>(
    model: &AcousticModel<E>,
    path: impl AsRef<Path>,
    decoder: &Decoder,
) -> Result<String> {
    let clip = load_wav(path)?;
    decode_utterance(model, &clip, decoder)
}

/// Decode a manifest and aggregate corpus WER/CER. The model must be in
/// eval mode.
pub fn evaluate<E: Element>(
    model: &AcousticModel<E>,
    entries: &[ManifestEntry],
    base_dir: &Path,
    decoder: &Decoder,
) -> Result<EvalReport> {
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if model.mode() != Mode::Eval {
        return Err(Error::Contract("evaluate requires eval mode".into()));
    }
    let mut utterances = Vec::with_capacity(entries.len());
    let (mut word_edits, mut words) = (0usize, 0usize);
    let (mut char_edits, mut chars) = (0usize, 0usize);
    for e in entries {
        let path = if Path::new(&e.audio_filepath).is_absolute() {
            PathBuf::from(&e.audio_filepath)
        } else {
            base_dir.join(&e.audio_filepath)
        };
        let clip =
            load_wav(&path).map_err(|err| Error::Data(format!("{}: {err}", e.audio_filepath)))?;
        let hypothesis = decode_utterance(model, &clip, decoder)?;
        let wer = word_error_rate(&e.text, &hypothesis);
        let cer = char_error_rate(&e.text, &hypothesis);
        word_edits += wer.distance;
        words += wer.reference_len;
        char_edits += cer.distance;
        chars += cer.reference_len;
        utterances.push(UtteranceReport {
            id: e.audio_filepath.clone(),
            reference: e.text.clone(),
            hypothesis,
            word_errors: wer.distance,
            word_count: wer.reference_len,
            wer: wer.rate,
            cer: cer.rate,
        });
    }
    Ok(EvalReport {
        wer: word_edits as f64 / words.max(1) as f64,
        cer: char_edits as f64 / chars.max(1) as f64,
        utterances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::write_wav;
    use crate::model::{ModelConfig, TrainingConfig};
    use std::f64::consts::PI;

    fn toy_corpus(dir: &Path, n: usize) -> Vec<ManifestEntry> {
        let mut entries = Vec::new();
        for i in 0..n {
            let freq = 300.0 + 120.0 * i as f64;
            let clip = AudioClip {
                samples: (0..6400)
                    .map(|j| 0.4 * (2.0 * PI * freq * j as f64 / 16000.0).sin())
                    .collect(),
                sample_rate: 16000,
            };
            let name = format!("u{i}.wav");
            write_wav(dir.join(&name), &clip).unwrap();
            entries.push(ManifestEntry {
                audio_filepath: name,
                text: ["go on", "red cat", "big dog", "old hen"][i % 4].to_string(),
                duration: 0.4,
            });
        }
        entries
    }

    fn tiny_file(epochs: usize) -> ConfigFile {
        ConfigFile::new(
            ModelConfig::tiny_1x1(),
            TrainingConfig {
                epochs,
                batch_size: 2,
                lr: 0.01,
                warmup_steps: 2,
                total_steps: None,
                checkpoint_every: 0,
                ..TrainingConfig::default()
            },
        )
    }

    #[test]
    fn zero_epochs_leaves_model_unchanged_with_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let entries = toy_corpus(dir.path(), 4);
        let options = TrainOptions {
            seed: 5,
            out_dir: dir.path().join("run"),
            init: None,
        };
        let (model, outcome) = train::<f32>(&tiny_file(0), entries, dir.path(), &options).unwrap();
        assert!(outcome.records.is_empty());
        let fresh = AcousticModel::<f32>::build(&ModelConfig::tiny_1x1(), 5).unwrap();
        for ((_, a), (_, b)) in model.params().iter().zip(fresh.params().iter()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn one_step_decreases_batch_loss_at_small_lr() {
        let dir = tempfile::tempdir().unwrap();
        let entries = toy_corpus(dir.path(), 2);
        let mut pipeline = DataPipeline::new(
            entries,
            dir.path(),
            crate::ctc::Vocabulary::english(),
            2,
            3,
            Default::default(),
        )
        .unwrap();
        let batch = pipeline.epoch_batches(0).unwrap().remove(0);
        let mut model = AcousticModel::<f64>::build(&ModelConfig::tiny_1x1(), 3).unwrap();
        model.set_mode(Mode::Train);

        let loss_of = |model: &AcousticModel<f64>| -> f64 {
            let feats = batch.to_tensor::<f64>().unwrap();
            let (lp, lens) = model.forward(&feats, &batch.feat_lengths, None).unwrap();
            let (loss, _) =
                ctc_loss_batch(&lp, &batch.targets, &lens, model.vocab.blank_index()).unwrap();
            loss.item()
        };

        let before = loss_of(&model);
        let feats = batch.to_tensor::<f64>().unwrap();
        let (lp, lens) = model.forward(&feats, &batch.feat_lengths, None).unwrap();
        let (loss, _) =
            ctc_loss_batch(&lp, &batch.targets, &lens, model.vocab.blank_index()).unwrap();
        model.zero_grads();
        loss.backward().unwrap();
        let params = model.params();
        let mut opt = NovoGrad::new(0.95, 0.5, 0.0).unwrap();
        opt.step(&params, 1e-4, 1.0).unwrap();
        let after = loss_of(&model);
        assert!(after < before, "loss {before} -> {after}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let entries = toy_corpus(dir.path(), 4);
        let run = |out: &str| {
            let options = TrainOptions {
                seed: 11,
                out_dir: dir.path().join(out),
                init: None,
            };
            train::<f32>(&tiny_file(2), entries.clone(), dir.path(), &options).unwrap()
        };
        let (ma, oa) = run("a");
        let (mb, ob) = run("b");
        for ((_, a), (_, b)) in ma.params().iter().zip(mb.params().iter()) {
            assert_eq!(a.values(), b.values());
        }
        let la: Vec<f64> = oa.records.iter().map(|r| r.loss).collect();
        let lb: Vec<f64> = ob.records.iter().map(|r| r.loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn resume_replays_the_uninterrupted_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let entries = toy_corpus(dir.path(), 4);
        // The cosine horizon must be pinned: a shorter first leg with a
        // derived horizon would anneal faster than the full run.
        let tiny_file = |epochs: usize| {
            let mut f = tiny_file(epochs);
            f.training.total_steps = Some(8);
            f
        };

        // Uninterrupted: 4 epochs.
        let (_, full) = train::<f32>(
            &tiny_file(4),
            entries.clone(),
            dir.path(),
            &TrainOptions {
                seed: 23,
                out_dir: dir.path().join("full"),
                init: None,
            },
        )
        .unwrap();

        // Two epochs, checkpoint, then resume for the remaining two.
        let (_, first) = train::<f32>(
            &tiny_file(2),
            entries.clone(),
            dir.path(),
            &TrainOptions {
                seed: 23,
                out_dir: dir.path().join("half"),
                init: None,
            },
        )
        .unwrap();
        let (_, second) = train::<f32>(
            &tiny_file(4),
            entries,
            dir.path(),
            &TrainOptions {
                seed: 23,
                out_dir: dir.path().join("resumed"),
                init: Some(InitFrom::Resume {
                    checkpoint: first.final_checkpoint.clone(),
                }),
            },
        )
        .unwrap();

        let full_tail: Vec<(usize, f64)> = full
            .records
            .iter()
            .skip(first.records.len())
            .map(|r| (r.step, r.loss))
            .collect();
        let resumed: Vec<(usize, f64)> = second.records.iter().map(|r| (r.step, r.loss)).collect();
        assert_eq!(full_tail, resumed);
    }

    #[test]
    fn evaluate_rejects_empty_and_train_mode() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = AcousticModel::<f32>::build(&ModelConfig::tiny_1x1(), 1).unwrap();
        assert!(matches!(
            evaluate(&model, &[], dir.path(), &Decoder::Greedy),
            Err(Error::EmptyDataset)
        ));
        let entries = toy_corpus(dir.path(), 1);
        assert!(matches!(
            evaluate(&model, &entries, dir.path(), &Decoder::Greedy),
            Err(Error::Contract(_))
        ));
        model.set_mode(Mode::Eval);
        let report = evaluate(&model, &entries, dir.path(), &Decoder::Greedy).unwrap();
        assert_eq!(report.utterances.len(), 1);
    }

    #[test]
    fn all_blank_hypothesis_scores_full_deletions() {
        let stats = word_error_rate("one two three", "");
        assert_eq!(stats.deletions, 3);
        assert!((stats.rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn padding_content_never_reaches_gradients() {
        // Frames beyond each utterance's length must contribute nothing:
        // filling the padding region with garbage leaves every parameter
        // gradient bit-identical.
        let mut model = AcousticModel::<f64>::build(&ModelConfig::tiny_1x1(), 9).unwrap();
        model.set_mode(Mode::Train);
        let mut rng = Rng::new(31);
        let (mels, t_max) = (64usize, 40usize);
        let lengths = [40usize, 22];
        let targets = vec![
            model.vocab.encode("go on").unwrap(),
            model.vocab.encode("red").unwrap(),
        ];
        let base: Vec<f64> = (0..2 * mels * t_max).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let grads_for = |feats: Vec<f64>, model: &AcousticModel<f64>| -> Vec<f64> {
            let x = Tensor::<f64>::from_vec(&[2, mels, t_max], feats).unwrap();
            let (lp, lens) = model.forward(&x, &lengths, None).unwrap();
            let (loss, _) =
                ctc_loss_batch(&lp, &targets, &lens, model.vocab.blank_index()).unwrap();
            model.zero_grads();
            loss.backward().unwrap();
            let mut all = Vec::new();
            for (_, p) in model.params() {
                all.extend(p.grad().unwrap_or_else(|| vec![0.0; p.numel()]));
            }
            all
        };

        let clean = grads_for(base.clone(), &model);
        let mut garbage = base;
        for f in 0..mels {
            for t in lengths[1]..t_max {
                garbage[(mels + f) * t_max + t] = rng.uniform(-50.0, 50.0);
            }
        }
        let dirty = grads_for(garbage, &model);
        assert_eq!(clean.len(), dirty.len());
        for (i, (a, b)) in clean.iter().zip(dirty.iter()).enumerate() {
            assert!(a == b, "gradient {i} changed: {a} vs {b}");
        }
    }
}
