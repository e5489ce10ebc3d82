//! Crate-wide error type.
//!
//! Numeric failure modes are kept distinct because callers react differently
//! to each: a divergent risk integral is a property of the (loss, r) pair and
//! must abort, while quadrature non-convergence still carries a partial value
//! and error bound that diagnostics may want to report.

use std::fmt;

/// Errors produced by risk computations, optimization and I/O.
#[derive(Debug)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    Domain(String),
    /// An intermediate quantity exceeded the representable range of `f64`.
    Overflow(String),
    /// An iterative scheme (series, continued fraction, quadrature) failed to
    /// reach its tolerance; `value`/`error_bound` describe the partial result.
    NonConvergence {
        what: String,
        value: f64,
        error_bound: f64,
    },
    /// The requested integral is infinite (loss grows too fast for the kernel).
    Divergence(String),
    /// The risk derivative never changes sign: no finite minimizer exists.
    NoOptimum(String),
    /// A loss description file failed to parse or validate.
    Schema(String),
    /// Underlying file-system failure.
    Io(std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn overflow(msg: impl Into<String>) -> Self {
        Error::Overflow(msg.into())
    }

    pub(crate) fn divergence(msg: impl Into<String>) -> Self {
        Error::Divergence(msg.into())
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    /// Short machine-readable tag for this error class (used by the CLI's
    /// structured stderr output).
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Overflow(_) => "overflow",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Divergence(_) => "divergence",
            Error::NoOptimum(_) => "no_optimum",
            Error::Schema(_) => "schema",
            Error::Io(_) => "io",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Overflow(msg) => write!(f, "overflow: {msg}"),
            Error::NonConvergence {
                what,
                value,
                error_bound,
            } => write!(
                f,
                "{what} did not converge (partial value {value:.6e}, error bound {error_bound:.6e})"
            ),
            Error::Divergence(msg) => write!(f, "divergent integral: {msg}"),
            Error::NoOptimum(msg) => write!(f, "no optimum: {msg}"),
            Error::Schema(msg) => write!(f, "loss description error: {msg}"),
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

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
