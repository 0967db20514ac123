use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),

    #[error("column `{column}` is not numeric (row {row}: `{value}`); categorical features are not supported")]
    NonNumeric {
        column: String,
        row: usize,
        value: String,
    },

    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("fold count {k} out of range for {n} rows (need 2 <= k <= n)")]
    FoldRange { k: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("unsupported model version {found} (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("invalid allowed error: {0}")]
    AllowedError(String),

    #[error("kept set must not be empty")]
    EmptyKeptSet,

    #[error("internal consistency fault: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
