//! Error type shared by every module.

use thiserror::Error;

/// Library error.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Operator or vector dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Matrix is not Hermitian within tolerance.
    #[error("matrix is not Hermitian: max deviation {0:e}")]
    NotHermitian(f64),
    /// Invalid protocol or scenario parameters.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A statistical test precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Numerical integration failed to reach tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    /// Conic solver failure.
    #[error("solver failure: {0}")]
    Solver(String),
    /// Configuration parse error.
    #[error("config error: {0}")]
    Config(String),
    /// I/O error.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// CSV writer error.
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// JSON error.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;
