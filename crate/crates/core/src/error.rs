//! Error type shared across the library.
//!
//! Every failure carries a stable machine-readable category so front-ends
//! can map errors to exit diagnostics without string matching.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// Configuration file missing, malformed, or inconsistent.
    #[error("config: {0}")]
    Config(String),

    /// An argument violates a precondition (negative rate, unknown label, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Hilbert-space construction or operator/space mismatch.
    #[error("hilbert space: {0}")]
    Space(String),

    /// Requested dense evolution above the configured dimension cap.
    #[error("dimension cap: {0}")]
    DimensionCap(String),

    /// An integrator could not meet its tolerance or step constraints.
    #[error("tolerance failure: {0}")]
    Tolerance(String),

    /// Guard-level population exceeded the truncation-leak threshold.
    #[error("truncation leak: {0}")]
    Leak(String),

    /// Numerical breakdown (norm underflow, singular pivot, ...).
    #[error("numerics: {0}")]
    Numerics(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Stable category tag for machine-readable error reporting.
    pub fn category(&self) -> &'static str {
        match self {
            SimError::Config(_) => "config-parse",
            SimError::InvalidInput(_) => "invalid-input",
            SimError::Space(_) => "space-mismatch",
            SimError::DimensionCap(_) => "dimension-cap",
            SimError::Tolerance(_) => "tolerance-failure",
            SimError::Leak(_) => "truncation-leak",
            SimError::Numerics(_) => "numerics",
            SimError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
