//! Error taxonomy shared across the toolkit.
//!
//! The CLI maps these onto exit codes: configuration and format problems
//! exit 2, data problems exit 3, numeric failures exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A model or run configuration is inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A file (WAV, ARPA, checkpoint, JSON) is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// Dataset contents violate the pipeline contract (bad transcript, etc).
    #[error("data error: {0}")]
    Data(String),

    /// An API precondition was violated.
    #[error("contract error: {0}")]
    Contract(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An evaluation or training corpus resolved to zero utterances.
    #[error("empty dataset")]
    EmptyDataset,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI: 2 config/format, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::Config(_) | Error::Format(_) | Error::Contract(_) => 2,
            Error::Data(_) | Error::EmptyDataset | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
            Error::Json(_) => 2,
        }
    }
}
