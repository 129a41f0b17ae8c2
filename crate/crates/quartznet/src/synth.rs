//! Synthetic tone corpus: ten short utterances where each word maps to a
//! pure tone. Small enough to memorize in minutes on a CPU, which makes it
//! the standard smoke test for the whole train/decode loop.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::frontend::{write_wav, AudioClip};
use crate::training::ManifestEntry;

pub const SAMPLE_RATE: u32 = 16_000;
const TONE_SECS: f64 = 0.15;
const GAP_SECS: f64 = 0.02;
const EDGE_SECS: f64 = 0.05;

/// Word-to-tone mapping. Words avoid doubled letters so every transcript
/// fits comfortably in the downsampled frame budget.
pub const TONE_WORDS: &[(&str, f64)] = &[
    ("bay", 392.0),
    ("dot", 523.3),
    ("go", 659.3),
    ("kim", 830.6),
    ("new", 987.8),
];

/// Ten three-word utterances; every word appears six times across them.
pub fn corpus_texts() -> Vec<&'static str> {
    vec![
        "bay dot go",
        "dot go kim",
        "go kim new",
        "kim new bay",
        "new bay dot",
        "bay go new",
        "dot kim bay",
        "go new dot",
        "kim bay go",
        "new dot kim",
    ]
}

fn tone_frequency(word: &str) -> f64 {
    TONE_WORDS
        .iter()
        .find(|(w, _)| *w == word)
        .map(|(_, f)| *f)
        .expect("corpus words are in the tone table")
}

/// Render one utterance's waveform: a tone per word with short gaps and a
/// 5 ms fade at each tone edge to avoid clicks.
pub fn render_text(text: &str) -> AudioClip {
    let sr = SAMPLE_RATE as f64;
    let tone_len = (TONE_SECS * sr) as usize;
    let gap_len = (GAP_SECS * sr) as usize;
    let edge_len = (EDGE_SECS * sr) as usize;
    let fade = (0.005 * sr) as usize;

    let mut samples = vec![0.0f64; edge_len];
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 {
            samples.extend(std::iter::repeat_n(0.0, gap_len));
        }
        let freq = tone_frequency(word);
        for j in 0..tone_len {
            let ramp_in = (j as f64 / fade as f64).min(1.0);
            let ramp_out = ((tone_len - 1 - j) as f64 / fade as f64).min(1.0);
            let v = 0.35 * (2.0 * PI * freq * j as f64 / sr).sin() * ramp_in * ramp_out;
            samples.push(v);
        }
    }
    samples.extend(std::iter::repeat_n(0.0, edge_len));
    AudioClip {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}

/// Write the ten WAV files plus `manifest.jsonl` into `dir`; returns the
/// manifest path.
pub fn generate_tone_corpus(dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut lines = Vec::new();
    for (i, text) in corpus_texts().into_iter().enumerate() {
        let clip = render_text(text);
        let name = format!("tone{i:02}.wav");
        write_wav(dir.join(&name), &clip)?;
        let entry = ManifestEntry {
            audio_filepath: name,
            text: text.to_string(),
            duration: clip.duration_secs(),
        };
        lines.push(serde_json::to_string(&entry)?);
    }
    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, lines.join("\n") + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::{min_frames, Vocabulary};
    use crate::training::load_manifest;

    #[test]
    fn corpus_is_ten_utterances_over_five_words() {
        let texts = corpus_texts();
        assert_eq!(texts.len(), 10);
        let mut counts = std::collections::HashMap::new();
        for t in &texts {
            for w in t.split_whitespace() {
                *counts.entry(w).or_insert(0usize) += 1;
            }
        }
        assert_eq!(counts.len(), 5);
        assert!(counts.values().all(|&c| c == 6));
    }

    #[test]
    fn every_transcript_fits_the_frame_budget() {
        let vocab = Vocabulary::english();
        for text in corpus_texts() {
            let clip = render_text(text);
            let frames = clip.samples.len().div_ceil(160);
            let out_frames = frames.div_ceil(2);
            let target = vocab.encode(text).unwrap();
            assert!(
                out_frames >= min_frames(&target) + 4,
                "{text}: {out_frames} frames for {} symbols",
                target.len()
            );
        }
    }

    #[test]
    fn generated_corpus_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_tone_corpus(dir.path().join("toy")).unwrap();
        let entries = load_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 10);
        for e in &entries {
            assert!(dir.path().join("toy").join(&e.audio_filepath).exists());
            assert!(e.duration > 0.4 && e.duration < 1.0);
        }
    }
}
