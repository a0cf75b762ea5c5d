use thiserror::Error;

/// Errors produced by the fusion, planning and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("SPD factorization failed (jitter levels tried: {attempted:?})")]
    Factorization { attempted: Vec<f64> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("planner error: {0}")]
    Planner(String),

    #[error("instance too large for exhaustive search: {count} joint walks")]
    TooLarge { count: u128 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
