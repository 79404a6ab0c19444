use std::path::PathBuf;

use thiserror::Error;

/// Coarse error class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range for size {len}")]
    Index { index: usize, len: usize },

    #[error("singular covariance: smallest eigenvalue {lambda_p:e} <= tolerance {tol:e}")]
    SingularCovariance { lambda_p: f64, tol: f64 },

    #[error("non-finite kernel value at pair ({i}, {j})")]
    NonFiniteKernel { i: usize, j: usize },

    #[error("Lipschitz constant unavailable: {0}")]
    Lipschitz(String),

    #[error("symmetric eigensolver did not converge (n = {n}, max |a_ij| = {max_abs:e})")]
    NoConvergence { n: usize, max_abs: f64 },

    /// A theorem precondition does not hold for the supplied inputs.
    #[error("{theorem}: {reason}")]
    Degenerate {
        theorem: &'static str,
        reason: String,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::Data(_)
            | Error::Dimension { .. }
            | Error::Index { .. } => ErrorClass::Data,
            Error::SingularCovariance { .. }
            | Error::NonFiniteKernel { .. }
            | Error::Lipschitz(_)
            | Error::NoConvergence { .. }
            | Error::Degenerate { .. } => ErrorClass::Numerical,
        }
    }

    pub(crate) fn degenerate(theorem: &'static str, reason: impl Into<String>) -> Self {
        Error::Degenerate {
            theorem,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
