//! Learned per-feature maps f_i and the shared surrogate head q_θ, trained
//! by block-dropout maximum likelihood with an information-efficiency
//! regularizer.

mod head;
mod mask;
mod model;
mod train;


pub use head::{jeffreys, log_likelihood, log_sigmoid, sigmoid, DistParams, HeadKind, LOG_VAR_MAX, LOG_VAR_MIN};
pub use mask::{sample_mask, MaskSampler, MaskVector};
pub use model::{MappingModel, ModelCheckpoint, ModelConfig, Standardizer};
pub use train::{objective_and_gradient, train, Batch, Objective, TrainConfig, TrainHistory};
