use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {step} does not divide the exercise interval {interval}")]
    NonDivisibleStep { step: f64, interval: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("sample reuse: {0}")]
    SeedReuse(String),

    #[error("unknown basis variant {0} (expected 1..=4)")]
    UnknownBasisVariant(u8),

    #[error("unknown table id {0:?} (expected one of 5.1, 5.2, 5.4)")]
    UnknownTable(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
