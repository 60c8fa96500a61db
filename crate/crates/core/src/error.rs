use thiserror::Error;

/// Everything that can stop a model evaluation or a simulation run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("singular Jacobian: det(A Aᵀ) = {det:e} is below the floor {floor:e}")]
    SingularJacobian { det: f64, floor: f64 },

    #[error("feature depth is not positive (z = {z})")]
    NonPositiveDepth { z: f64 },

    #[error("non-finite value in {context}")]
    NonFiniteState { context: &'static str },

    #[error("inertia matrix is not positive definite")]
    NonPositiveDefinite,

    #[error("parameterization mismatch: {0}")]
    Parameterization(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("run '{scenario}' aborted at t = {t}: {reason}")]
    Aborted { scenario: String, t: f64, reason: String },

    #[error("trace has no column '{0}'")]
    MissingColumn(String),

    #[error("trace format: {0}")]
    TraceFormat(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
