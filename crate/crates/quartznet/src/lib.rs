//! From-scratch QuartzNet acoustic-model toolkit.
//!
//! Everything here is built directly on a minimal autodiff tensor: the
//! 1D time-channel separable convolution stack, CTC loss with analytic
//! gradients, greedy and prefix beam-search decoding with n-gram fusion,
//! a log-mel front-end with augmentations, the NovoGrad optimizer with a
//! warmup + cosine-annealing schedule, and a parameter profiler that
//! reproduces the standard QuartzNet model sizes exactly.
//!
//! # Layout
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`tensor`] | dense tensors, reverse-mode autodiff, gradient checking |
//! | [`nn`] | conv / depthwise / grouped-pointwise layers, batch norm, residual blocks |
//! | [`model`] | config-driven network builder, forward pass, profiler, checkpoints |
//! | [`ctc`] | CTC loss (forward-backward), greedy + beam decoders, ARPA LM, WER |
//! | [`frontend`] | WAV input, log-mel features, SpecAugment / SpecCutout / speed perturbation |
//! | [`training`] | NovoGrad, LR schedule, batching, the training loop, evaluation |
//! | [`synth`] | tiny synthetic tone corpus for smoke tests and demos |
//!
//! # Examples
//!
//! One runnable program per capability:
//!
//! - **`profile_architectures`** - parameter tables for every shipped config
//! - **`gradient_check`** - finite-difference checks on each layer
//! - **`ctc_oracle`** - CTC loss vs brute-force path enumeration
//! - **`decode_with_lm`** - prefix beam search with n-gram fusion
//! - **`features_and_augmentation`** - log-mel front-end, SpecAugment, SpecCutout
//! - **`schedule_and_optimizer`** - warmup/cosine schedule and NovoGrad
//! - **`train_tiny`** - end-to-end: synthesize a tone corpus, train to 0% WER, transcribe
//!
//! ```bash
//! cargo run --release -p quartznet --example train_tiny
//! ```
//!
//! The `quartznet` binary wraps the same machinery as `profile` / `train` /
//! `eval` / `transcribe` commands; see the repository README.

pub mod cli;
pub mod ctc;
pub mod error;
pub mod frontend;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
