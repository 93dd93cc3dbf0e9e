//! Small dense networks with exact reverse-mode gradients and an Adam optimizer.

mod adam;
mod checkpoint;
mod dense;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use checkpoint::NetCheckpoint;
pub use dense::{Activation, DenseNet, GradientTape, Trace};
