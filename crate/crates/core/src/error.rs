use thiserror::Error;

/// Errors raised by the numerical routines, the simulators and the CLI.
#[derive(Debug, Error)]
pub enum LevyError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("value unbounded at u = {u}: {reason}")]
    Unbounded { u: f64, reason: String },

    #[error("quadrature did not converge after {evaluations} evaluations (estimated error {error:e})")]
    Quadrature { evaluations: usize, error: f64 },

    #[error("insufficient decay of the characteristic function: {0}")]
    InsufficientDecay(String),

    #[error("score undefined at numerical zero (x = {x})")]
    NumericalZero { x: f64 },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("time {t} is outside the ledger horizon {horizon}")]
    Horizon { t: f64, horizon: f64 },

    #[error("degenerate path functionals: {0}")]
    Degenerate(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("parameter mismatch: {0}")]
    Mismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LevyError {
    pub(crate) fn param(field: &str, reason: impl Into<String>) -> Self {
        LevyError::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LevyError>;
