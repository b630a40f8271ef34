use thiserror::Error;

/// Errors surfaced by the protocol, simulator, analyzer and planner layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("insufficient key material: need {needed} bits, have {have}")]
    InsufficientKey { needed: usize, have: usize },

    #[error("enumeration space has {size} points, above the cap of {cap}; use sampling instead")]
    SpaceTooLarge { size: u128, cap: u128 },

    #[error("distribution weights do not sum to 1")]
    NotNormalized,

    #[error("malformed data: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
