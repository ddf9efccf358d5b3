use std::path::PathBuf;

use crate::oracle::{AccessLevel, QueryKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{kind} queries are not permitted on a {level} oracle")]
    AccessViolation { level: AccessLevel, kind: QueryKind },

    #[error("query budget of {0} exhausted")]
    BudgetExhausted(u64),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("remote oracle error: {0}")]
    Remote(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("attack failed: {0}")]
    Attack(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Coarse classification used by the CLI to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) | Error::InvalidNetwork(_) => ErrorCategory::Config,
            Error::Io(_) | Error::Format { .. } | Error::Json(_) | Error::Csv(_) => ErrorCategory::Io,
            _ => ErrorCategory::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Runtime,
}
