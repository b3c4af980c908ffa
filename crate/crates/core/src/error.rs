//! Error type shared by every numerical module.

use thiserror::Error;

/// Failures surfaced by the library. Variant names double as the error
/// identifiers reported by the command-line runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two geometric objects are closer than the configured threshold.
    #[error("SeparationViolation: {what} (distance {distance:.3e} < threshold {threshold:.3e})")]
    SeparationViolation {
        what: String,
        distance: f64,
        threshold: f64,
    },

    /// A potential was requested too close to its source curve.
    #[error("NearFieldError: target at distance {distance:.3e} below threshold {threshold:.3e}")]
    NearFieldError { distance: f64, threshold: f64 },

    /// Dense or banded solve failed or was too ill-conditioned.
    #[error("SingularSystem: {context} (condition estimate {condition:.3e})")]
    SingularSystem { context: String, condition: f64 },

    /// A region does not sit where the problem requires it.
    #[error("RegionViolation: {0}")]
    RegionViolation(String),

    /// σ² came out clearly negative, i.e. the discretization is broken.
    #[error("NegativeSigmaSquared: {0:.6e}")]
    NegativeSigmaSquared(f64),

    /// Input arrays have inconsistent sizes.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

impl Error {
    /// Stable short name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::SeparationViolation { .. } => "SeparationViolation",
            Error::NearFieldError { .. } => "NearFieldError",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::RegionViolation(_) => "RegionViolation",
            Error::NegativeSigmaSquared(_) => "NegativeSigmaSquared",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, got })
    }
}
