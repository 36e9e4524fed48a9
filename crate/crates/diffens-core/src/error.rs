//! Error type shared across the crate.

use alloc::string::String;

/// Errors produced by schedule algebra, model fitting, sampling and metrics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// Input data is structurally unusable (empty, too small, unequal sizes).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A quantity that must stay finite became NaN or infinite.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    /// Evaluation at a point where the operation is singular (e.g. t = 0).
    #[error("singular operation: {0}")]
    Singular(String),
    /// Sampler scheme and configuration disagree.
    #[error("scheme/config mismatch: {0}")]
    SchemeMismatch(String),
    /// ODE integration left the trusted region.
    #[error("integration diverged: {0}")]
    IntegrationDiverged(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
