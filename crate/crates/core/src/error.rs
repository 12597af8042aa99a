use thiserror::Error;

/// Errors raised by the simulation engines and their configuration layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max |H - H^dagger| = {0:e})")]
    NotHermitian(f64),

    #[error("state is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("basis dimension {dimension} exceeds the cap of {cap} states")]
    DimensionCap { dimension: u128, cap: usize },

    #[error("state lies outside the truncated basis: {0}")]
    OutsideBasis(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("trace drift {drift:e} exceeds {limit:e} at t = {t}")]
    TraceDrift { t: f64, drift: f64, limit: f64 },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NotHermitian(_) => "not_hermitian",
            Error::NotNormalized(_) => "not_normalized",
            Error::DimensionCap { .. } => "dimension_cap",
            Error::OutsideBasis(_) => "outside_basis",
            Error::Contract(_) => "contract_violation",
            Error::Integration { .. } => "integration_failure",
            Error::TraceDrift { .. } => "trace_drift",
            Error::EmptyTrajectory => "empty_trajectory",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// The offending configuration field, when the error names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::InvalidParameter { field, .. } => Some(field),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
