use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid horizon {0}: need 2 <= H <= 2^24")]
    InvalidHorizon(usize),

    #[error("state index {index} out of range for H = {horizon}")]
    InvalidState { index: usize, horizon: usize },

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("invalid maze layout: {0}")]
    InvalidLayout(String),

    #[error("invalid dataset size: {0}")]
    InvalidSize(String),

    #[error("invalid goal-sampling weights: {0}")]
    InvalidGoalConfig(String),

    #[error("invalid sampling request: {0}")]
    InvalidSampling(String),

    #[error("dataset format error: {0}")]
    Format(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("dataset does not cover tuples required by the backup: {missing:?}")]
    Coverage { missing: Vec<(usize, usize)> },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
