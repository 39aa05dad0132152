use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("empty effective sample: all multiplicities are zero or no rows given")]
    EmptySample,

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("column `{0}` not found in CSV header")]
    MissingColumn(String),

    #[error("non-numeric value `{value}` in column `{column}` at row {row}")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("requested subsample of {requested} rows but only {available} available")]
    SubsampleTooLarge { requested: usize, available: usize },

    #[error("network error: {0}")]
    Network(String),

    #[error("unknown experiment `{name}`; valid ids: {valid}")]
    UnknownExperiment { name: String, valid: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
