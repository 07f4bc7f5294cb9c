use thiserror::Error;

use crate::expr::ParseError;
use crate::system::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time index {index} outside horizon 0..={horizon}")]
    OutOfHorizon { index: usize, horizon: usize },

    #[error("window {w} outside {min}..={max}")]
    Window { w: usize, min: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is singular")]
    Singular { what: String },

    #[error("{what} is not positive definite (Cholesky pivot {pivot})")]
    NotPositiveDefinite { what: String, pivot: usize },

    #[error("{what} is not invertible at step {step} (Cholesky pivot {pivot})")]
    Conditioning {
        what: &'static str,
        step: usize,
        pivot: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dense trajectory inverse needs {size}x{size}, cap is {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("expression error in {location}: {source}")]
    Expression {
        location: String,
        #[source]
        source: ParseError,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("system failed validation:\n{0}")]
    Validation(ValidationReport),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
