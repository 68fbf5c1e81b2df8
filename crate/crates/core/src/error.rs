use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bit-string width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    #[error("invalid bit-string {text:?}: {reason}")]
    InvalidBitString { text: String, reason: String },

    #[error("distribution has no positive weight")]
    EmptyDistribution,

    #[error("cluster has no members")]
    EmptyCluster,

    #[error("every bit-string was removed during redistribution")]
    DegenerateMitigation,

    #[error("no calibration entry for gate kind `{0}`")]
    MissingCalibration(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {message}")]
    Data { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
