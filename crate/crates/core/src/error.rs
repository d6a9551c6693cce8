use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch for {tensor}: expected {expected}, got {actual}")]
    ShapeMismatch {
        tensor: String,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{0}")]
    Checkpoint(String),

    #[error("truncated checkpoint: {0}")]
    TruncatedCheckpoint(String),

    #[error("no evaluable queries")]
    NoEvaluableQueries,

    #[error("insufficient instances: requested {requested} {kind}, found {available}")]
    InsufficientInstances {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("compose cache does not match filter bank: {0}")]
    StaleCache(String),

    #[error("{path}: {source}")]
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(
        tensor: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::ShapeMismatch {
            tensor: tensor.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
