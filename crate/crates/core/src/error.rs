use thiserror::Error;

/// Errors produced by the discretization, factorization and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} lies outside the parametric domain [0, 1]")]
    OutOfDomain { value: f64 },

    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular Jacobian (det = {det:e}) at parametric point {point:?}")]
    SingularJacobian { det: f64, point: Vec<f64> },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("{operator} is not positive definite (curvature {value:e} at iteration {iteration})")]
    Indefinite {
        operator: String,
        iteration: usize,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("nonconforming interface: {0}")]
    Nonconforming(String),

    #[error("subdomain {0} is not a tensor-product patch pair")]
    NotTensorGrid(usize),

    #[error("incomplete Cholesky broke down at row {row} even with diagonal shift {shift}")]
    IcBreakdown { row: usize, shift: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("estimated memory {required} bytes exceeds the cap of {cap} bytes")]
    MemoryLimit { required: u64, cap: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
