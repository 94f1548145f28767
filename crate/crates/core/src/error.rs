use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("covariance matrix of size {size} is not positive definite after jitter {max_jitter:e}")]
    IllConditioned { size: usize, max_jitter: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input outside domain: {0}")]
    OutOfDomain(String),

    #[error("initial state has zero posterior density")]
    ZeroDensityInit,

    #[error("optimization failed: {0}")]
    Optimization(String),
}
