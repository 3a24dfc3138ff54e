use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors shared by every stage of the extraction pipeline.
///
/// The variants line up with the failure classes the command-line surface
/// maps onto exit codes, so callers can branch on [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: JSON parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("embedding error: {0}")]
    Embedding(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("label normalization failed for model output {raw:?}")]
    Normalization { raw: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification of an [`Error`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Backend,
    Internal,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Template(_) => ErrorKind::Config,
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Data(_)
            | Error::Capacity(_)
            | Error::Checkpoint(_) => ErrorKind::Data,
            Error::Backend(_) | Error::Embedding(_) | Error::Normalization { .. } => {
                ErrorKind::Backend
            }
            Error::Contract(_) | Error::Io { .. } => ErrorKind::Internal,
        }
    }
}
