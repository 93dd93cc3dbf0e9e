use serde::{Deserialize, Serialize};

use super::dense::{DenseNet, GradientTape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state for one network.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    step: u64,
    first: GradientTape<T>,
    second: GradientTape<T>,
    config: AdamConfig,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &DenseNet<T>, config: AdamConfig) -> Self {
        Self {
            step: 0,
            first: GradientTape::zeros_like(net),
            second: GradientTape::zeros_like(net),
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }
}

/// One bias-corrected Adam update. With `maximize` the parameters ascend the gradient.
///
/// The tape is validated before anything is touched, so a rejected step
/// leaves both the network and the state unchanged.
pub fn adam_step<T: Scalar>(
    net: &mut DenseNet<T>,
    tape: &GradientTape<T>,
    state: &mut OptimizerState<T>,
    maximize: bool,
) -> Result<()> {
    if !tape.matches(net) || !state.first.matches(net) {
        return Err(Error::InvalidArgument(
            "gradient tape or optimizer state does not match network".into(),
        ));
    }
    for (l, (w, b)) in tape.weights.iter().zip(&tape.biases).enumerate() {
        if w.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: format!("layer {l} weights"),
            });
        }
        if b.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                block: format!("layer {l} biases"),
            });
        }
    }

    state.step += 1;
    let cfg = state.config;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let bias1 = T::one() - T::lit(cfg.beta1.powi(state.step as i32));
    let bias2 = T::one() - T::lit(cfg.beta2.powi(state.step as i32));
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.epsilon);
    let sign = if maximize { T::one() } else { -T::one() };

    let params = net.params_mut();
    let moments = state
        .first
        .weights
        .iter_mut()
        .zip(state.first.biases.iter_mut())
        .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
        .zip(
            state
                .second
                .weights
                .iter_mut()
                .zip(state.second.biases.iter_mut())
                .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut())),
        );
    for ((p, &g), (m, v)) in params.zip(tape.iter()).zip(moments) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p += sign * lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
