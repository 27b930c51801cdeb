use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid event: {0}")]
    InvalidEvent(String),

    #[error("corrupted trace: {0}")]
    CorruptedTrace(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid point ({lambda1}, {lambda2}) lies on a stability boundary")]
    BoundaryPoint { lambda1: f64, lambda2: f64 },

    #[error("insufficient data: needed {needed} samples, collected {collected}")]
    InsufficientData { needed: usize, collected: usize },

    #[error("parameters outside the stability region: {0}")]
    Unstable(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
