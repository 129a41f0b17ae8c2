//! Log-mel filterbank features.
//!
//! 20 ms Hann windows, 10 ms hop, 64 triangular mel filters spanning
//! 0-8 kHz, natural log with a 1e-10 floor, then per-utterance
//! mean/variance normalization per feature. Frame count is exactly
//! `ceil(samples / hop)` via reflect padding.

use super::fft::magnitude_spectrum;
use super::wav::AudioClip;
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const N_MELS: usize = 64;
pub const WIN_SECS: f64 = 0.02;
pub const HOP_SECS: f64 = 0.01;
const N_FFT: usize = 512;
const LOG_FLOOR: f64 = 1e-10;

/// `[F, T']` log-mel energies (feature-major) plus the normalization stats
/// that produced them.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub mels: usize,
    pub frames: usize,
    pub values: Vec<f64>,
    pub frame_shift: f64,
    /// Per-feature mean before normalization.
    pub mean: Vec<f64>,
    /// Per-feature standard deviation before normalization (1.0 where the
    /// feature was constant).
    pub std: Vec<f64>,
}

impl FeatureMatrix {
    pub fn value(&self, mel: usize, frame: usize) -> f64 {
        self.values[mel * self.frames + frame]
    }

    pub fn set(&mut self, mel: usize, frame: usize, v: f64) {
        self.values[mel * self.frames + frame] = v;
    }

    /// Undo the per-utterance normalization.
    pub fn denormalized(&self) -> Vec<f64> {
        let mut out = self.values.clone();
        for f in 0..self.mels {
            for t in 0..self.frames {
                out[f * self.frames + t] = out[f * self.frames + t] * self.std[f] + self.mean[f];
            }
        }
        out
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filterbank over FFT bins, unit peak per filter.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64) -> Vec<Vec<f64>> {
    let f_max = sample_rate / 2.0;
    let mel_points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(hz_to_mel(f_max) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (mel_points[m], mel_points[m + 1], mel_points[m + 2]);
            (0..=n_fft / 2)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rising = (f - lo) / (mid - lo);
                    let falling = (hi - f) / (hi - mid);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Log-mel features with per-utterance normalization.
pub fn log_mel(clip: &AudioClip) -> Result<FeatureMatrix> {
    let raw = mel_spectrogram(clip)?;
    let mut fm = raw;
    let (f_dim, t_dim) = (fm.mels, fm.frames);
    for f in 0..f_dim {
        let row = &fm.values[f * t_dim..(f + 1) * t_dim];
        let mean: f64 = row.iter().sum::<f64>() / t_dim as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t_dim as f64;
        let std = if var.sqrt() < 1e-10 { 1.0 } else { var.sqrt() };
        fm.mean[f] = mean;
        fm.std[f] = std;
        for t in 0..t_dim {
            let i = f * t_dim + t;
            fm.values[i] = (fm.values[i] - mean) / std;
        }
    }
    Ok(fm)
}

/// Un-normalized log-mel energies (the stats fields are zero mean / unit
/// std placeholders).
pub fn mel_spectrogram(clip: &AudioClip) -> Result<FeatureMatrix> {
    if clip.samples.is_empty() {
        return Err(Error::Contract("empty audio clip".into()));
    }
    if clip.sample_rate != SAMPLE_RATE {
        return Err(Error::Contract(format!(
            "sample_rate={}, front-end requires {SAMPLE_RATE}",
            clip.sample_rate
        )));
    }
    if !clip.samples.iter().all(|s| s.is_finite()) {
        return Err(Error::Contract("audio contains non-finite samples".into()));
    }

    let win = (WIN_SECS * SAMPLE_RATE as f64).round() as usize; // 320
    let hop = (HOP_SECS * SAMPLE_RATE as f64).round() as usize; // 160
    let n = clip.samples.len();
    let frames = n.div_ceil(hop);
    let pad_left = (win - hop) / 2;

    // Periodic Hann window.
    let window: Vec<f64> = (0..win)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / win as f64).cos()))
        .collect();
    let filters = mel_filterbank(N_MELS, N_FFT, SAMPLE_RATE as f64);

    let mut values = vec![0.0; N_MELS * frames];
    let mut frame_buf = vec![0.0; win];
    for t in 0..frames {
        for (j, buf) in frame_buf.iter_mut().enumerate() {
            let i = (t * hop + j) as isize - pad_left as isize;
            *buf = clip.samples[reflect_index(i, n)] * window[j];
        }
        let mags = magnitude_spectrum(&frame_buf, N_FFT);
        for (m, filter) in filters.iter().enumerate() {
            let energy: f64 = filter.iter().zip(mags.iter()).map(|(w, v)| w * v).sum();
            values[m * frames + t] = energy.max(LOG_FLOOR).ln();
        }
    }

    Ok(FeatureMatrix {
        mels: N_MELS,
        frames,
        values,
        frame_shift: HOP_SECS,
        mean: vec![0.0; N_MELS],
        std: vec![1.0; N_MELS],
    })
}
