//! End-to-end demo: synthesize the ten-utterance tone corpus, train the
//! tiny1x1 model to zero greedy WER with the shipped recipe, evaluate,
//! and transcribe a re-rendered waveform.
//!
//!     cargo run --release -p quartznet --example train_tiny

use quartznet::frontend::write_wav;
use quartznet::model::ConfigFile;
use quartznet::nn::Mode;
use quartznet::synth::{generate_tone_corpus, render_text};
use quartznet::training::{
    evaluate, load_manifest, train, transcribe_file, Decoder, TrainOptions,
};

fn main() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .ancestors()
        .nth(2)
        .unwrap()
        .to_path_buf();
    let work = std::env::temp_dir().join("quartznet_train_tiny");
    let _ = std::fs::remove_dir_all(&work);

    let corpus = work.join("corpus");
    let manifest = generate_tone_corpus(&corpus).unwrap();
    let entries = load_manifest(&manifest).unwrap();
    println!("tone corpus: {} utterances in {}", entries.len(), corpus.display());

    let config = ConfigFile::load(root.join("configs/tiny1x1.json")).unwrap();
    println!(
        "training {} ({} params) for {} epochs...",
        config.model.name,
        quartznet::model::count_params(&config.model).unwrap().total,
        config.training.epochs
    );
    let started = std::time::Instant::now();
    let (mut model, outcome) = train::<f32>(
        &config,
        entries.clone(),
        &corpus,
        &TrainOptions {
            seed: 42,
            out_dir: work.join("run"),
            init: None,
        },
    )
    .unwrap();
    for r in outcome.records.iter().step_by(250) {
        println!("  step {:>4}  lr {:.4}  loss {:>8.4}", r.step, r.lr, r.loss);
    }
    let last = outcome.records.last().unwrap();
    println!(
        "done: step {} loss {:.4} in {:.1?}; checkpoint {}",
        last.step,
        last.loss,
        started.elapsed(),
        outcome.final_checkpoint.display()
    );

    model.set_mode(Mode::Eval);
    let report = evaluate(&model, &entries, &corpus, &Decoder::Greedy).unwrap();
    println!(
        "greedy eval: WER {:.2}%  CER {:.2}%",
        report.wer * 100.0,
        report.cer * 100.0
    );
    for u in report.utterances.iter().take(3) {
        println!("  ref {:?} -> hyp {:?}", u.reference, u.hypothesis);
    }

    // Transcribe a freshly rendered waveform that is not on disk yet.
    let probe = work.join("probe.wav");
    write_wav(&probe, &render_text("new go bay")).unwrap();
    let text = transcribe_file(&model, &probe, &Decoder::Greedy).unwrap();
    println!("transcribe({}) -> {text:?}", probe.display());
}
