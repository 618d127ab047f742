//! Dense MLP kernel with hand-derived backpropagation.
//!
//! Weights are stored `in × out` so a batch (one example per row) maps as
//! `X·W + b`. Gradients come back in the same structure as the parameters,
//! which lets optimizers walk both with [`Parameterized::params_mut`].

mod checkpoint;
mod loss;
mod matrix;
mod mlp;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, Tensor};
pub use loss::{bce_loss, bce_per_sample, BceLoss, PROB_CLAMP};
pub use matrix::DenseMatrix;
pub use mlp::{Activation, Linear, Mlp, MlpCache, MlpSpec, OutputHead};
pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("stale forward cache: {0}")]
    StaleCache(String),
    #[error("invalid optimizer spec: {0}")]
    Optimizer(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything exposing its trainable tensors as flat slices in a fixed order.
pub trait Parameterized {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;
    /// Named tensors for checkpointing.
    fn tensors(&self, prefix: &str) -> Vec<Tensor>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Overwrite parameters from checkpoint tensors produced by [`Self::tensors`].
    fn load_tensors(&mut self, tensors: &[Tensor]) -> Result<(), NnError> {
        let mut dst = self.params_mut();
        if dst.len() != tensors.len() {
            return Err(NnError::Checkpoint(format!("expected {} tensors, got {}", dst.len(), tensors.len())));
        }
        for (d, t) in dst.iter_mut().zip(tensors) {
            if d.len() != t.data.len() {
                return Err(NnError::Checkpoint(format!("tensor {} has {} values, expected {}", t.name, t.data.len(), d.len())));
            }
            d.copy_from_slice(&t.data);
        }
        Ok(())
    }
}
