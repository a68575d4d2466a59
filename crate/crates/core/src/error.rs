//! Error type shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse failure at row {row}, column {col}: {detail}")]
    Parse { row: usize, col: usize, detail: String },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("value {value} at row {row}, column {col} is outside the declared domain")]
    DomainViolation { row: usize, col: usize, value: i64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error(
        "rejection sampling budget exhausted for component {component}: \
         best divergence {best_divergence} below threshold {threshold}"
    )]
    RejectionBudgetExhausted {
        component: usize,
        best_divergence: f64,
        threshold: f64,
    },

    #[error("empty time range [{lo}, {hi})")]
    EmptyTimeRange { lo: usize, hi: usize },

    #[error(
        "interval {index} of {count} is too short for conditional-independence \
         testing: {length} samples, {required} required"
    )]
    IntervalTooShort {
        index: usize,
        count: usize,
        length: usize,
        required: usize,
    },

    #[error("configuration space too large: {configs} configurations exceed the cap {cap}")]
    ConfigSpaceTooLarge { configs: u128, cap: u64 },

    #[error("non-finite divergence score: {0}")]
    NonFiniteScore(String),

    #[error("no usable divergence series: {0}")]
    NoUsableSeries(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
