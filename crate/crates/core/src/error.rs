//! Error type shared by all estimators and runners.

use thiserror::Error;

/// Errors surfaced by the library.
///
/// Variants are grouped by how a caller should react: argument validation
/// (`InvalidArgument`, `InsufficientData`), numerical trouble
/// (`SingularCovariance`, `NumericalFailure`, `DegenerateSpectrum`, `NotPositiveDefinite`),
/// pipeline-level failures (`ScreeningTooAggressive`) and file I/O (`Io`, `Parse`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    #[error("numerical failure in {what} after {iterations} iterations")]
    NumericalFailure { what: String, iterations: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error(
        "screening kept {survivors} coordinates at threshold {threshold}, fewer than the {required} required"
    )]
    ScreeningTooAggressive {
        survivors: usize,
        threshold: f64,
        required: usize,
    },

    #[error("matrix is not positive definite (estimated minimum eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
