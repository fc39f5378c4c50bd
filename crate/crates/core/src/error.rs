use std::path::PathBuf;

/// Errors raised by table handling, training and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A value violates a documented invariant (bad config, malformed table).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("no ranking supervision: every training query has an empty pair set")]
    NoSupervision,

    #[error("degenerate cost range")]
    DegenerateCostRange,
}

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid(_) | Error::Parse { .. } | Error::Shape(_) => ErrorKind::Validation,
            Error::Io { .. } | Error::Numeric(_) | Error::NoSupervision | Error::DegenerateCostRange => {
                ErrorKind::Runtime
            }
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

pub type Result<T> = std::result::Result<T, Error>;
