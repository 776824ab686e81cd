use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible domain.
    #[error("invalid parameter `{name}` = {value}: {constraint}")]
    Param {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("shape mismatch: expected length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("kernel matrix for {n} samples exceeds the capacity of {cap}")]
    Capacity { n: usize, cap: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, constraint: &'static str) -> Self {
        Error::Param {
            name,
            value,
            constraint,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param { .. }
            | Error::Shape { .. }
            | Error::Index { .. }
            | Error::Capacity { .. }
            | Error::Invalid(_)
            | Error::Unsupported(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } | Error::Json(_) => 3,
            Error::NonFiniteGradient { .. } | Error::Degenerate(_) => 4,
        }
    }
}
