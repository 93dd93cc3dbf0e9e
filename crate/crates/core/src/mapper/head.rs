//! Surrogate distributions q(Y | ·): log-likelihood, Jeffreys divergence
//! and their derivatives with respect to the raw head outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Outputs (mean, log-variance).
    Gaussian,
    /// Outputs a logit.
    Bernoulli,
}

impl HeadKind {
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::Gaussian => 2,
            HeadKind::Bernoulli => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistParams<T> {
    Gaussian { mean: T, log_var: T },
    Bernoulli { logit: T },
}

impl<T: Scalar> DistParams<T> {
    /// Reads raw head outputs, clamping the log-variance.
    pub fn from_output(kind: HeadKind, out: &[T]) -> Self {
        match kind {
            HeadKind::Gaussian => DistParams::Gaussian {
                mean: out[0],
                log_var: clamp_log_var(out[1]),
            },
            HeadKind::Bernoulli => DistParams::Bernoulli { logit: out[0] },
        }
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            DistParams::Gaussian { .. } => HeadKind::Gaussian,
            DistParams::Bernoulli { .. } => HeadKind::Bernoulli,
        }
    }

    pub fn variance(&self) -> Option<T> {
        match *self {
            DistParams::Gaussian { log_var, .. } => Some(log_var.exp()),
            DistParams::Bernoulli { .. } => None,
        }
    }

    pub fn probability(&self) -> Option<T> {
        match *self {
            DistParams::Bernoulli { logit } => Some(sigmoid(logit)),
            DistParams::Gaussian { .. } => None,
        }
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> T {
        match *self {
            DistParams::Gaussian { mean, .. } => mean,
            DistParams::Bernoulli { logit } => sigmoid(logit),
        }
    }
}

fn clamp_log_var<T: Scalar>(v: T) -> T {
    v.max(T::lit(LOG_VAR_MIN)).min(T::lit(LOG_VAR_MAX))
}

/// Derivative of the clamp: 1 inside the interval, 0 where it saturates.
fn clamp_slope<T: Scalar>(v: T) -> T {
    if v >= T::lit(LOG_VAR_MIN) && v <= T::lit(LOG_VAR_MAX) {
        T::one()
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// log σ(x), stable for large |x|.
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// log q(y) under `params`.
pub fn log_likelihood<T: Scalar>(params: &DistParams<T>, y: T) -> T {
    match *params {
        DistParams::Gaussian { mean, log_var } => {
            let r = y - mean;
            -T::lit(0.5) * (T::lit(std::f64::consts::TAU.ln()) + log_var)
                - r * r / (T::lit(2.0) * log_var.exp())
        }
        DistParams::Bernoulli { logit } => y * log_sigmoid(logit) + (T::one() - y) * log_sigmoid(-logit),
    }
}

/// Symmetrized KL divergence ½KL(a‖b) + ½KL(b‖a).
pub fn jeffreys<T: Scalar>(a: &DistParams<T>, b: &DistParams<T>) -> Result<T> {
    match (*a, *b) {
        (
            DistParams::Gaussian { mean: ma, log_var: sa },
            DistParams::Gaussian { mean: mb, log_var: sb },
        ) => {
            let q = T::lit(0.25);
            let e = (sa - sb).exp();
            let dm = ma - mb;
            Ok(q * (e + e.recip() - T::lit(2.0)) + q * dm * dm * ((-sa).exp() + (-sb).exp()))
        }
        (DistParams::Bernoulli { logit: la }, DistParams::Bernoulli { logit: lb }) => {
            Ok(T::lit(0.5) * (sigmoid(la) - sigmoid(lb)) * (la - lb))
        }
        _ => Err(Error::InvalidArgument(
            "Jeffreys divergence between different head kinds".into(),
        )),
    }
}

/// d log q(y) / d(raw head output).
pub(crate) fn log_likelihood_grad<T: Scalar>(kind: HeadKind, out: &[T], y: T) -> Vec<T> {
    match DistParams::from_output(kind, out) {
        DistParams::Gaussian { mean, log_var } => {
            let inv = (-log_var).exp();
            let r = y - mean;
            let half = T::lit(0.5);
            vec![r * inv, (-half + half * r * r * inv) * clamp_slope(out[1])]
        }
        DistParams::Bernoulli { logit } => vec![y - sigmoid(logit)],
    }
}

/// Jeffreys divergence between two raw head outputs and its gradients
/// with respect to each of them.
pub(crate) fn jeffreys_with_grad<T: Scalar>(kind: HeadKind, a: &[T], b: &[T]) -> (T, Vec<T>, Vec<T>) {
    let pa = DistParams::from_output(kind, a);
    let pb = DistParams::from_output(kind, b);
    let value = jeffreys(&pa, &pb).expect("same head kind");
    match (pa, pb) {
        (
            DistParams::Gaussian { mean: ma, log_var: sa },
            DistParams::Gaussian { mean: mb, log_var: sb },
        ) => {
            let q = T::lit(0.25);
            let e = (sa - sb).exp();
            let (ia, ib) = ((-sa).exp(), (-sb).exp());
            let dm = ma - mb;
            let d_mean = T::lit(0.5) * dm * (ia + ib);
            let d_sa = q * (e - e.recip()) - q * dm * dm * ia;
            let d_sb = q * (e.recip() - e) - q * dm * dm * ib;
            (
                value,
                vec![d_mean, d_sa * clamp_slope(a[1])],
                vec![-d_mean, d_sb * clamp_slope(b[1])],
            )
        }
        (DistParams::Bernoulli { logit: la }, DistParams::Bernoulli { logit: lb }) => {
            let (p, q) = (sigmoid(la), sigmoid(lb));
            let half = T::lit(0.5);
            let diff = la - lb;
            (
                value,
                vec![half * (p * (T::one() - p) * diff + (p - q))],
                vec![half * (-q * (T::one() - q) * diff - (p - q))],
            )
        }
        _ => unreachable!("both parameters come from the same head kind"),
    }
}
