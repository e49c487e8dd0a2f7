use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters supplied by the caller (bad window, ratio, n, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("cannot perturb dialogue `{id}`: {reason}")]
    CannotPerturb { id: String, reason: String },

    #[error("no n-grams of order {n} found in any dialogue")]
    EmptyTable { n: usize },

    #[error("cannot split: {0}")]
    CannotSplit(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("invalid ordering for task {task}: {reason}")]
    InvalidOrdering { task: usize, reason: String },

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Whether the error stems from caller misuse rather than bad data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
