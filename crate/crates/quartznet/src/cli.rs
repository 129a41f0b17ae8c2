//! Command-line interface: `profile`, `train`, `eval`, `transcribe`.
//!
//! Exit codes: 0 success, 1 partial failure (transcribe), 2 config/format
//! problems, 3 data problems, 4 numeric failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::ctc::{BeamConfig, NGramLM};
use crate::error::{Error, Result};
use crate::model::{
    count_params, load_checkpoint, separable_module_count, tds_param_count, ConfigFile,
};
use crate::nn::Mode;
use crate::training::{
    evaluate, load_manifest, train, transcribe_file, Decoder, InitFrom, TrainOptions,
};

#[derive(Parser, Debug)]
#[command(
    name = "quartznet",
    about = "QuartzNet acoustic-model toolkit: profile architectures, train with CTC, evaluate and transcribe",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DecoderArgs {
    /// ARPA language model for beam-search fusion.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    /// Beam width; omit to use greedy decoding.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Language model weight.
    #[arg(long, default_value_t = 3.5)]
    pub alpha: f64,
    /// Word insertion bonus.
    #[arg(long, default_value_t = 1.5)]
    pub beta: f64,
}

impl DecoderArgs {
    fn build(&self) -> Result<Decoder> {
        let lm = match &self.lm {
            Some(path) => Some(NGramLM::load_arpa(path)?),
            None => None,
        };
        match self.beam {
            None if lm.is_some() => Err(Error::Config(
                "--lm requires beam decoding; pass --beam as well".into(),
            )),
            None => Ok(Decoder::Greedy),
            Some(width) => Ok(Decoder::Beam {
                config: BeamConfig {
                    beam_width: width,
                    alpha: self.alpha,
                    beta: self.beta,
                },
                lm,
            }),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count parameters per layer for one or more model configs.
    Profile {
        /// Config JSON files.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Emit a machine-readable JSON report instead of the table.
        #[arg(long)]
        json: bool,
        /// Also print the time-depth separable block cost for `K,W,C`.
        #[arg(long, value_name = "K,W,C")]
        compare_tds: Option<String>,
    },
    /// Train a model on a JSON-lines manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "runs/latest")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// dotted.key=value config overrides (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Initialize weights from a checkpoint (fine-tuning).
        #[arg(long)]
        init_checkpoint: Option<PathBuf>,
        /// With --init-checkpoint: re-initialize the output projection for
        /// a new label inventory.
        #[arg(long)]
        reinit_head: bool,
        /// Resume an interrupted run exactly (weights + optimizer + step).
        #[arg(long, conflicts_with_all = ["init_checkpoint", "reinit_head"])]
        resume: Option<PathBuf>,
    },
    /// Report corpus WER/CER for a checkpoint on a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the per-utterance JSON-lines report here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Print one transcript per input WAV.
    Transcribe {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input files, transcribed in order.
        #[arg(required = true)]
        wavs: Vec<PathBuf>,
        #[command(flatten)]
        decoder: DecoderArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

/// Run a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Profile {
            configs,
            json,
            compare_tds,
        } => cmd_profile(&configs, json, compare_tds.as_deref()),
        Command::Train {
            config,
            manifest,
            out_dir,
            seed,
            overrides,
            init_checkpoint,
            reinit_head,
            resume,
        } => cmd_train(
            &config,
            &manifest,
            out_dir,
            seed,
            &overrides,
            init_checkpoint,
            reinit_head,
            resume,
        ),
        Command::Eval {
            checkpoint,
            manifest,
            report,
            decoder,
            seed,
        } => cmd_eval(&checkpoint, &manifest, report, &decoder, seed),
        Command::Transcribe {
            checkpoint,
            wavs,
            decoder,
            seed,
        } => cmd_transcribe(&checkpoint, &wavs, &decoder, seed),
    }
}

fn parse_tds_dims(spec: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "--compare-tds wants K,W,C, got {spec:?}"
        )));
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad --compare-tds value {p:?}")))
        })
        .collect::<Result<_>>()?;
    Ok((nums[0], nums[1], nums[2]))
}

fn cmd_profile(configs: &[PathBuf], as_json: bool, compare_tds: Option<&str>) -> Result<i32> {
    let tds = compare_tds.map(parse_tds_dims).transpose()?;
    let mut reports = Vec::new();
    for path in configs {
        let file = ConfigFile::load(path)?;
        reports.push(count_params(&file.model)?);
    }

    if as_json {
        let mut doc = json!({ "models": reports });
        if let Some((k, w, c)) = tds {
            doc["tds_comparison"] = json!({
                "k": k, "w": w, "c": c,
                "tds_params": tds_param_count(k, w, c),
                "separable_params": separable_module_count(k, c),
            });
        }
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(0);
    }

    for report in &reports {
        println!("model {}", report.model);
        println!("{:<6} {:<34} {:>12}", "layer", "shape", "params");
        for layer in &report.layers {
            println!("{:<6} {:<34} {:>12}", layer.name, layer.detail, layer.params);
        }
        println!(
            "{:<6} {:<34} {:>12}   ({:.1}M)",
            "total", "", report.total, report.total_millions
        );
        println!();
    }
    if let Some((k, w, c)) = tds {
        println!(
            "tds block (k={k}, w={w}, c={c}): {} params; time-channel separable module \
             for the same dims (K*c + c^2): {}",
            tds_param_count(k, w, c),
            separable_module_count(k, c)
        );
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config_path: &PathBuf,
    manifest_path: &PathBuf,
    out_dir: PathBuf,
    seed: u64,
    overrides: &[String],
    init_checkpoint: Option<PathBuf>,
    reinit_head: bool,
    resume: Option<PathBuf>,
) -> Result<i32> {
    let mut config = ConfigFile::load(config_path)?;
    for o in overrides {
        config = config.with_override(o)?;
    }
    let entries = load_manifest(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));

    let init = match (init_checkpoint, resume) {
        (Some(checkpoint), None) => Some(InitFrom::FineTune {
            checkpoint,
            reinit_head,
        }),
        (None, Some(checkpoint)) => Some(InitFrom::Resume { checkpoint }),
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("clap forbids this combination"),
    };
    let options = TrainOptions {
        seed,
        out_dir,
        init,
    };
    let (_, outcome) = train::<f32>(&config, entries, &base_dir, &options)?;
    let last_loss = outcome.records.last().map(|r| r.loss);
    println!(
        "trained {} steps ({} utterances skipped); final loss {}; checkpoint {}",
        outcome.records.len(),
        outcome.skipped_total,
        last_loss.map_or("n/a".to_string(), |l| format!("{l:.4}")),
        outcome.final_checkpoint.display()
    );
    Ok(0)
}

fn cmd_eval(
    checkpoint: &PathBuf,
    manifest_path: &PathBuf,
    report_path: Option<PathBuf>,
    decoder_args: &DecoderArgs,
    seed: u64,
) -> Result<i32> {
    let decoder = decoder_args.build()?;
    let (mut model, _) = load_checkpoint::<f32>(checkpoint, None, false, seed)?;
    model.set_mode(Mode::Eval);
    let entries = load_manifest(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let report = evaluate(&model, &entries, &base_dir, &decoder)?;
    println!(
        "WER {:.2}%  CER {:.2}%  ({} utterances)",
        report.wer * 100.0,
        report.cer * 100.0,
        report.utterances.len()
    );
    if let Some(path) = report_path {
        let mut lines = Vec::new();
        for u in &report.utterances {
            lines.push(serde_json::to_string(u)?);
        }
        std::fs::write(&path, lines.join("\n") + "\n")?;
        println!("per-utterance report: {}", path.display());
    }
    Ok(0)
}

fn cmd_transcribe(
    checkpoint: &PathBuf,
    wavs: &[PathBuf],
    decoder_args: &DecoderArgs,
    seed: u64,
) -> Result<i32> {
    let decoder = decoder_args.build()?;
    let (mut model, _) = load_checkpoint::<f32>(checkpoint, None, false, seed)?;
    model.set_mode(Mode::Eval);
    let mut failures = 0usize;
    for path in wavs {
        match transcribe_file(&model, path, &decoder) {
            Ok(text) => println!("{text}"),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failures += 1;
            }
        }
    }
    Ok(if failures > 0 { 1 } else { 0 })
}
