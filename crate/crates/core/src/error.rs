//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("location has dimension {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("location outside the domain: {0}")]
    OutsideDomain(String),

    #[error("duplicate locations in {0}")]
    DuplicateLocations(String),

    #[error("target coincides with reference location {index}")]
    TargetOnReference { index: usize },

    #[error("covariance matrix not positive definite after jitter ({context})")]
    NotPositiveDefinite { context: String },

    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    #[error("cell {cell} holds {count} targets, above the cap of {cap}; use a finer partition")]
    CellCap { cell: usize, count: usize, cap: usize },

    #[error("optimizer did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
