use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically zero")]
    ZeroMatrix,
    #[error("rank exhausted: iteration {requested} requested but only {available} available")]
    RankExhausted { requested: usize, available: usize },
    #[error("oracle quantities unavailable: {0}")]
    OracleUnavailable(&'static str),
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("emergency stop fired at iteration {0}; no further iterates")]
    Terminated(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
