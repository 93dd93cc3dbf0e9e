use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// JSON form of a [`DenseNet`]. Values are stored as `f64`, which round-trips
/// both supported scalar types exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl<T: Scalar> DenseNet<T> {
    pub fn to_checkpoint(&self) -> NetCheckpoint {
        NetCheckpoint {
            layer_dims: self.layer_dims().to_vec(),
            activations: self.activations().to_vec(),
            weights: (0..self.num_layers())
                .map(|l| self.weights(l).iter().map(|v| v.as_f64()).collect())
                .collect(),
            biases: (0..self.num_layers())
                .map(|l| self.biases(l).iter().map(|v| v.as_f64()).collect())
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &NetCheckpoint) -> Result<Self> {
        let conv = |rows: &[Vec<f64>]| -> Result<Vec<Vec<T>>> {
            rows.iter()
                .map(|r| {
                    r.iter()
                        .map(|&v| {
                            T::from_f64(v).ok_or_else(|| Error::NonFinite {
                                context: "checkpoint value".into(),
                            })
                        })
                        .collect()
                })
                .collect()
        };
        DenseNet::from_parts(
            ckpt.layer_dims.clone(),
            ckpt.activations.clone(),
            conv(&ckpt.weights)?,
            conv(&ckpt.biases)?,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(json)?)
    }
}
