use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of an operation (bad ids, zero denominators, shape mismatches).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A choice model cannot produce a distribution for some student.
    #[error("choice model error: {0}")]
    Model(String),

    #[error("training error: {0}")]
    Training(String),

    /// The optimizer cannot start (e.g. status quo violates a constraint).
    #[error("setup error: {0}")]
    Setup(String),

    #[error("instance too large for exhaustive search: {candidates} candidate zonings exceed the limit of {limit}")]
    TooLarge { candidates: f64, limit: u64 },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 2 for bad configuration or mismatched
    /// artifacts, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Mismatch(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
