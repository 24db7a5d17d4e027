use thiserror::Error;

use crate::linalg::SpdFailure;

/// Errors raised by the closure, optimizer and time-stepping layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The exponent `α·b` exceeded the double-precision limit at some quadrature point.
    #[error("ansatz overflow (exponent {exponent:.3e})")]
    Overflow { exponent: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("linear solve failed: {0}")]
    Linear(#[from] SpdFailure),

    /// The dual Newton solver did not converge; the caller should regularize.
    #[error("optimizer needs regularization after {iterations} iterations: {reason}")]
    NeedsRegularization { iterations: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("time step underflow at t = {t:.6e} (dt = {dt:.3e}, cell {cell:?}): {cause}")]
    DtUnderflow {
        t: f64,
        dt: f64,
        cell: Option<usize>,
        cause: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
