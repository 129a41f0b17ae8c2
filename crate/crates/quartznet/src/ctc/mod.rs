//! Connectionist Temporal Classification: loss, decoders, n-gram language
//! model, and error-rate scoring.

mod arpa;
mod decode;
mod loss;
mod vocab;
mod wer;

pub use arpa::NGramLM;
pub use decode::{beam_search, collapse, greedy_decode, BeamConfig, Hypothesis};
pub use loss::{ctc_loss, ctc_loss_batch, min_frames, CtcBatchStats, CtcLattice, CtcOutput, LOG_ZERO};
pub use vocab::Vocabulary;
pub use wer::{char_error_rate, word_error_rate, EditStats};
