//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("conditioning block is numerically singular (condition number {condition:.3e}): {context}")]
    SingularConditioning { condition: f64, context: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("degenerate statistics: {0}")]
    Degenerate(String),

    #[error("sample size too small: {0}")]
    SampleSize(String),

    #[error("model state error: {0}")]
    State(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
