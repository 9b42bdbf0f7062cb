use thiserror::Error;

use crate::protocols::fit::FitError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("atoms {i} and {j} share a position")]
    SingularGeometry { i: usize, j: usize },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not Hermitian (max |H - H^dag| = {deviation:.3e}); use trajectory or non-Hermitian propagation for lossy Hamiltonians")]
    NonHermitian { deviation: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed pattern `{pattern}`: {reason}")]
    Pattern { pattern: String, reason: String },

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error(transparent)]
    Fit(#[from] FitError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Fit(_))
    }
}
