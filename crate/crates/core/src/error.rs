use thiserror::Error;

/// Errors produced by mesh generation, space construction, assembly, and the
/// linear solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({0}, {1}) is outside the mesh")]
    PointOutsideMesh(f64, f64),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("indefinite operator encountered in CG (p^T A p = {0:e})")]
    IndefiniteOperator(f64),

    #[error("method precondition violated: {0}")]
    MethodPrecondition(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
