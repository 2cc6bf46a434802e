use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed WAV file {path}: {reason}")]
    WavParse { path: PathBuf, reason: String },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported sample rate {0} Hz")]
    UnsupportedRate(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error(transparent)]
    Autodiff(#[from] autodiff::Error),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint incompatible with configuration: {0}")]
    CheckpointIncompatible(String),

    #[error("training diverged: non-finite loss at step {step}")]
    Divergence { step: usize },

    #[error("external scorer error: {0}")]
    Scorer(String),

    #[error("undefined reference: {0}")]
    UndefinedReference(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed report: {0}")]
    Report(String),

    #[error("contract violated: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::CheckpointIncompatible(_) => 2,
            _ => 3,
        }
    }
}
