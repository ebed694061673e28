use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("matrix is not special orthogonal (defect {defect:.3e})")]
    NotSpecialOrthogonal { defect: f64 },

    #[error("operator of dimension {dim} exceeds materialization limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("non-finite energy at iteration {iter}")]
    Diverged { iter: usize },

    #[error("singular value iteration did not converge after {iterations} restarts (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("non-finite value from finite-difference map")]
    NonFinite,

    #[error("unknown instance kind `{0}`")]
    UnknownKind(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed VWF1 container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
