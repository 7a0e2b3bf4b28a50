use thiserror::Error;

/// Errors raised by the measurement pipeline.
///
/// Variants carry enough context for the CLI to name the failing stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("value {value} outside range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("profile at {angle_deg:.2} deg has no blade-back points")]
    DataDeficiency { angle_deg: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
