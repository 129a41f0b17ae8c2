//! Audio front-end: WAV ingestion, log-mel filterbank features, and the
//! waveform / spectrogram augmentations.

mod augment;
mod features;
mod fft;
mod wav;

pub use augment::{spec_augment, spec_cutout, speed_perturb, AugmentSpec};
pub use features::{
    log_mel, mel_filterbank, mel_spectrogram, FeatureMatrix, HOP_SECS, N_MELS, SAMPLE_RATE,
    WIN_SECS,
};
pub use fft::{fft, magnitude_spectrum};
pub use wav::{load_wav, parse_wav, write_wav, AudioClip};
