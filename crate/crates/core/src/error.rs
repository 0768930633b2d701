//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unknown class name {name:?} at row {row}")]
    UnknownClassName { name: String, row: usize },

    #[error("non-numeric value {value:?} in column {column:?} at row {row}")]
    NonNumericCell {
        column: String,
        row: usize,
        value: String,
    },

    #[error("binary column {column:?} holds {value} at row {row}; binary columns may only hold 0 or 1")]
    BinaryOutOfRange {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("missing value in column {column:?} at row {row}")]
    MissingCell { column: String, row: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),

    #[error("class_counts sum to {got} but o + u = {expected}")]
    ClassCountMismatch { expected: usize, got: usize },

    #[error("test_count {test_count} out of range for {n} rows (need 0 < test_count < n)")]
    TestCountOutOfRange { test_count: usize, n: usize },

    #[error("column {0:?} has zero variance")]
    ZeroVarianceColumn(String),

    #[error("alpha {0} too strict: elimination would remove every feature")]
    AlphaTooStrict(f64),

    #[error("ell = {ell} out of range: must satisfy 1 <= ell <= {h}")]
    EllOutOfRange { ell: usize, h: usize },

    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feature universes do not match: {0}")]
    UniverseMismatch(String),

    #[error("need at least 2 shared features to compare rankings, got {0}")]
    TooFewSharedFeatures(usize),

    #[error("no rankings given")]
    EmptyRankings,

    #[error("no feasible (alpha, ell) configuration: {0}")]
    AllConfigsInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code: 2 input/validation, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 4,
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
