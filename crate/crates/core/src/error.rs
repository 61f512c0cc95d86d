use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch for {what}: expected {expected}, got {actual}")]
    Shape {
        what: String,
        expected: String,
        actual: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("{path}:{line}: malformed record: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: String, expected: String },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),

    #[error("checkpoint body disagrees with header for {array}: header implies {expected} values, body has {actual}")]
    SizeMismatch {
        array: String,
        expected: usize,
        actual: usize,
    },

    #[error("empty history")]
    EmptyHistory,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape { .. } => "shape",
            Error::Data(_) | Error::Parse { .. } | Error::EmptyHistory => "data",
            Error::Format(_)
            | Error::Version { .. }
            | Error::Truncated(_)
            | Error::SizeMismatch { .. } => "checkpoint",
            Error::NonFinite(_) => "numeric",
            Error::Io { .. } => "io",
        }
    }
}
