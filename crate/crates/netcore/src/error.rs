use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("layer {layer}: expected input width {expected}, got {actual}")]
    ShapeMismatch {
        layer: String,
        expected: usize,
        actual: usize,
    },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("backward called without a recorded forward pass")]
    NoForwardRecord,
    #[error("gradient for {param} contains a non-finite value")]
    NonFiniteGradient { param: String },
    #[error("optimizer state does not match parameters: {0}")]
    OptimizerMismatch(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidOptimizer(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
