//! Error type shared by every module.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed file {path}: line {line}: {msg}")]
    MalformedFile {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("invalid data at row {row}, column {col}: {msg}")]
    Data { row: usize, col: usize, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate signal in column {column}: zero power, noise variance undefined")]
    DegenerateSignal { column: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("non-finite value in target {}, iteration {iteration}, coefficient {coefficient}", target.map_or("?".to_string(), |t| t.to_string()))]
    NonFinite {
        target: Option<usize>,
        iteration: usize,
        coefficient: usize,
    },

    #[error("non-finite observable {observable} at row {row}")]
    NonFiniteObservable { row: usize, observable: usize },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("divergence at step {step}")]
    Divergence { step: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("target {target}: {source}")]
    Target {
        target: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Attach the index of the target regression that produced this error.
    pub fn for_target(self, target: usize) -> Error {
        match self {
            Error::NonFinite {
                iteration,
                coefficient,
                ..
            } => Error::NonFinite {
                target: Some(target),
                iteration,
                coefficient,
            },
            other => Error::Target {
                target,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by the caller's configuration or arguments rather
    /// than by the data being processed.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Lookup(_))
    }
}
