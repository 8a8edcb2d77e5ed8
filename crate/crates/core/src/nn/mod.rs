//! Minimal differentiable-function kernel: MLPs, Adam and Polyak averaging.

mod adam;
mod checkpoint;
mod matrix;
mod mlp;

pub use adam::{polyak_update, Adam};
pub use checkpoint::{MlpCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use matrix::Matrix;
pub use mlp::{ForwardCache, Gradients, InputGradTape, Mlp, OutputActivation};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("polyak coefficient must lie in [0, 1], got {0}")]
    InvalidTau(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
