//! Model-augmented k-NN estimation of conditional mutual information and
//! Markov blanket feature selection.
//!
//! Learned per-feature maps `f_i(X_i)` are trained once with a masked
//! likelihood objective and then reused by every k-NN conditional
//! independence test of the blanket search. Numeric types are generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix the common choices.

pub mod ci;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod knn;
pub mod mapper;
pub mod markov_blanket;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SampleBlockF64 = knn::SampleBlock<f64>;
pub type SampleBlockF32 = knn::SampleBlock<f32>;
pub type DatasetF64 = dataset::Dataset<f64>;
pub type DatasetF32 = dataset::Dataset<f32>;
pub type DenseNetF64 = nn::DenseNet<f64>;
pub type DenseNetF32 = nn::DenseNet<f32>;
pub type MappingModelF64 = mapper::MappingModel<f64>;
pub type MappingModelF32 = mapper::MappingModel<f32>;
