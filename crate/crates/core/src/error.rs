use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("coordinate length mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("point not on manifold: {0}")]
    InvalidPoint(String),

    #[error("vector not tangent: {0}")]
    InvalidTangent(String),

    /// Outside the neighbourhood where exp/log are well defined
    /// (antipodal sphere points, steps past the injectivity guard).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("spline structure mismatch: {0}")]
    StructureMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),
}
