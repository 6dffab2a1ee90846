use thiserror::Error;

/// Errors produced by estimation, selection and inference routines.
#[derive(Error, Debug)]
pub enum SpecdenError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid limit exceeded: {0}")]
    GridLimit(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("fit did not converge after {iterations} iterations (last max |change| = {last_change:.3e})")]
    Nonconvergence { iterations: usize, last_change: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate criterion: {0}")]
    Degenerate(String),
}

impl From<ndarray_linalg::error::LinalgError> for SpecdenError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        SpecdenError::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SpecdenError>;
