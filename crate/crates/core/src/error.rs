use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("foot target ({x:.4}, {z:.4}) is outside the leg workspace")]
    OutOfWorkspace { x: f64, z: f64 },

    #[error("simulation diverged at t = {time:.3} s")]
    Diverged { time: f64 },

    #[error("gaussian process fit failed: {0}")]
    GpFit(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unsupported log format `{0}`")]
    LogFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
