use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("CFL condition violated: Courant number {courant:.4} exceeds 1")]
    Cfl { courant: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged after {epoch} epochs: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("calibration set too small: {got} samples, need at least {min}")]
    CalibrationTooSmall { got: usize, min: usize },

    #[error("NARX state not populated: have {have} samples, need {need}")]
    NotWarm { have: usize, need: usize },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Fails with `InvalidParameter` unless `value` is finite and strictly positive.
pub(crate) fn require_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn require_nonnegative(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and >= 0, got {value}")))
    }
}
