use thiserror::Error;

/// Errors raised by the numerical kernels and the learning pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("{0} is not Hermitian")]
    NotHermitian(&'static str),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("objective returned a non-finite value")]
    NonFiniteObjective,
}

pub type Result<T> = std::result::Result<T, Error>;
