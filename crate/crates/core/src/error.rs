use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode index {mode} out of range for a space with {n_modes} mode(s)")]
    ModeOutOfRange { mode: usize, n_modes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integrator failed at t = {t_reached}: {message}")]
    Integrator { t_reached: f64, message: String },

    #[error("non-physical channel: {0}")]
    NonPhysicalChannel(String),

    #[error("channel is not completely positive: Choi eigenvalue {eigenvalue:e}")]
    NotCompletelyPositive { eigenvalue: f64 },

    #[error("channel failed the linearity audit (deviation {deviation:e})")]
    NonLinearChannel { deviation: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("calibration table is not monotone at entry {index}")]
    NonMonotoneCalibration { index: usize },

    #[error("value {value} outside the calibrated range [{min}, {max}]")]
    OutOfCalibratedRange { value: f64, min: f64, max: f64 },

    #[error("problem too large: {0}")]
    ProblemTooLarge(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("noise library: {0}")]
    NoiseLibrary(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
