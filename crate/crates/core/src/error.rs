use thiserror::Error;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("insufficient acceptance: {accepted} accepted out of {attempted}, need at least {required}")]
    InsufficientAcceptance {
        accepted: usize,
        attempted: usize,
        required: usize,
    },

    #[error("harmonic function at the path root is not positive (value {value}, stderr {stderr})")]
    RootValueNonpositive { value: f64, stderr: f64 },

    #[error("population count overflow")]
    OverflowGuard,

    #[error("empty sample")]
    EmptySample,

    #[error("non-positive value {value} at index {index}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("hypothesis gate failed: {0}")]
    GateFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
