//! Waveform and spectrogram augmentations: speed perturbation, SpecAugment
//! band masking, and SpecCutout rectangles.
//!
//! All masking writes zeros, which is the per-feature mean of the normalized
//! features these transforms are meant to run on. Randomness comes from the
//! seed carried in [`AugmentSpec`], with a documented draw order (each freq
//! mask draws width then start, then each time mask, then each cutout
//! rectangle draws height, width, row, column) so tests can replay it.

use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use super::wav::AudioClip;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSpec {
    /// One factor is drawn per utterance per epoch.
    pub speed_factors: Vec<f64>,
    pub freq_masks: usize,
    pub freq_mask_width: usize,
    pub time_masks: usize,
    pub time_mask_width: usize,
    pub cutout_rects: usize,
    pub cutout_freq: usize,
    pub cutout_time: usize,
    pub seed: u64,
}

impl Default for AugmentSpec {
    /// No augmentation.
    fn default() -> Self {
        AugmentSpec {
            speed_factors: vec![1.0],
            freq_masks: 0,
            freq_mask_width: 0,
            time_masks: 0,
            time_mask_width: 0,
            cutout_rects: 0,
            cutout_freq: 0,
            cutout_time: 0,
            seed: 0,
        }
    }
}

impl AugmentSpec {
    /// 10% speed perturbation plus SpecAugment and SpecCutout defaults.
    pub fn standard(seed: u64) -> Self {
        AugmentSpec {
            speed_factors: vec![0.9, 1.0, 1.1],
            freq_masks: 2,
            freq_mask_width: 15,
            time_masks: 2,
            time_mask_width: 25,
            cutout_rects: 5,
            cutout_freq: 10,
            cutout_time: 10,
            seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.freq_masks == 0
            && self.time_masks == 0
            && self.cutout_rects == 0
            && self.speed_factors.iter().all(|&f| f == 1.0)
    }
}

/// Resample by linear interpolation: output length `round(N / factor)`,
/// pitch scaled by `factor`.
pub fn speed_perturb(clip: &AudioClip, factor: f64) -> Result<AudioClip> {
    if !(0.8..=1.25).contains(&factor) {
        return Err(Error::Contract(format!(
            "speed factor {factor} outside [0.8, 1.25]"
        )));
    }
    let n = clip.samples.len();
    let out_len = (n as f64 / factor).round() as usize;
    let mut samples = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let pos = i as f64 * factor;
        let i0 = pos.floor() as usize;
        let frac = pos - i0 as f64;
        let a = clip.samples[i0.min(n - 1)];
        let b = clip.samples[(i0 + 1).min(n - 1)];
        samples.push(a * (1.0 - frac) + b * frac);
    }
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
    })
}

/// Zero `freq_masks` random horizontal bands and `time_masks` random
/// vertical bands. Shape is preserved.
pub fn spec_augment(fm: &FeatureMatrix, spec: &AugmentSpec) -> FeatureMatrix {
    let mut out = fm.clone();
    let mut rng = Rng::new(spec.seed);
    let (f, t) = (fm.mels, fm.frames);
    for _ in 0..spec.freq_masks {
        let width = rng.range_inclusive(0, spec.freq_mask_width.min(f));
        let start = rng.range_inclusive(0, f - width);
        for row in start..start + width {
            for col in 0..t {
                out.set(row, col, 0.0);
            }
        }
    }
    for _ in 0..spec.time_masks {
        let width = rng.range_inclusive(0, spec.time_mask_width.min(t));
        let start = rng.range_inclusive(0, t - width);
        for row in 0..f {
            for col in start..start + width {
                out.set(row, col, 0.0);
            }
        }
    }
    out
}

/// Zero `cutout_rects` random rectangles of at most `cutout_freq` x
/// `cutout_time` cells.
pub fn spec_cutout(fm: &FeatureMatrix, spec: &AugmentSpec) -> FeatureMatrix {
    let mut out = fm.clone();
    let mut rng = Rng::new(spec.seed);
    let (f, t) = (fm.mels, fm.frames);
    for _ in 0..spec.cutout_rects {
        let fh = rng.range_inclusive(0, spec.cutout_freq.min(f));
        let tw = rng.range_inclusive(0, spec.cutout_time.min(t));
        let f0 = rng.range_inclusive(0, f - fh);
        let t0 = rng.range_inclusive(0, t - tw);
        for row in f0..f0 + fh {
            for col in t0..t0 + tw {
                out.set(row, col, 0.0);
            }
        }
    }
    out
}
