//! Shared error type for the whole pipeline.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file did not conform to its declared format.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A caller-supplied parameter violated its documented bound.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An input violated a structural contract (e.g. a non-symmetric
    /// matrix passed to a symmetric eigensolver).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The input carries no usable information for the requested
    /// operation (zero variance, empty signal, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A least-squares fit had more free coefficients than data points.
    #[error("underdetermined fit: {0}")]
    UnderdeterminedFit(String),

    /// Data rank is too low for the requested component count.
    #[error("insufficient rank: found {found}, need {required}; retry with a smaller component count")]
    InsufficientRank { required: usize, found: usize },

    /// The drift-correction reference peak could not be located.
    #[error("reference peak not found in strip {strip}: window signal is indistinguishable from background")]
    ReferenceNotFound { strip: usize },

    /// A linear system was singular where invertibility was required.
    #[error("singular system: {0}")]
    Singular(String),

    /// An iterative method exhausted its iteration budget.
    #[error("convergence failure: {0}")]
    Convergence(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
