//! Error type shared across the crate.

use std::fmt;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by meshing, assembly, solvers, denoisers and file I/O.
#[derive(Debug)]
pub enum Error {
    /// An argument violated a documented precondition.
    InvalidArgument(String),
    /// Operand shapes are inconsistent.
    DimensionMismatch { expected: usize, got: usize, what: &'static str },
    /// A matrix that must be positive definite is not.
    NotPositiveDefinite(String),
    /// A linear system is singular to working precision.
    SingularSystem(String),
    /// An iterative solver failed (divergence, repeated backtracking failure).
    SolverFailure(String),
    /// A NaN or infinity appeared where finite values are required.
    NonFinite(String),
    /// A file has the wrong magic, version, checksum or layout.
    Format(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { expected, got, what } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {got}")
            }
            Error::NotPositiveDefinite(msg) => write!(f, "matrix not positive definite: {msg}"),
            Error::SingularSystem(msg) => write!(f, "singular system: {msg}"),
            Error::SolverFailure(msg) => write!(f, "solver failure: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::Io(err) => write!(f, "I/O error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

/// Checks that a slice holds only finite values.
pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} contains NaN or infinity")))
    }
}

/// Checks an exact length.
pub(crate) fn ensure_len(len: usize, expected: usize, what: &'static str) -> Result<()> {
    if len == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got: len, what })
    }
}
