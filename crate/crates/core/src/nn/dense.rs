use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, out: T) -> T {
        match self {
            Activation::Relu => {
                if out > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Fully connected feedforward network.
///
/// Layer `l` maps `layer_dims[l]` inputs to `layer_dims[l + 1]` outputs with a
/// row-major `out × in` weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T> {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    activations: Vec<Activation>,
}

/// Per-parameter gradient buffers with the exact shapes of a [`DenseNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTape<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<Vec<T>>,
}

/// Layer outputs of one forward pass; `layers[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    layers: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.layers.last().expect("trace holds at least the input")
    }

    pub fn input(&self) -> &[T] {
        &self.layers[0]
    }
}

impl<T: Scalar> DenseNet<T> {
    /// Glorot-uniform weights, zero biases, ReLU on hidden layers and identity on the output.
    pub fn new<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.gen_range(-limit..=limit)))
                    .collect(),
            );
            biases.push(vec![T::zero(); fan_out]);
        }
        let layers = layer_dims.len() - 1;
        let activations = (0..layers)
            .map(|l| {
                if l + 1 == layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activations,
        })
    }

    pub fn from_parts(
        layer_dims: Vec<usize>,
        activations: Vec<Activation>,
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let layers = layer_dims.len() - 1;
        for (what, got) in [
            ("activations", activations.len()),
            ("weight matrices", weights.len()),
            ("bias vectors", biases.len()),
        ] {
            if got != layers {
                return Err(Error::InvalidArgument(format!(
                    "expected {layers} {what}, got {got}"
                )));
            }
        }
        for l in 0..layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            if weights[l].len() != fan_in * fan_out {
                return Err(Error::DimensionMismatch {
                    context: "weight matrix",
                    expected: fan_in * fan_out,
                    actual: weights[l].len(),
                });
            }
            if biases[l].len() != fan_out {
                return Err(Error::DimensionMismatch {
                    context: "bias vector",
                    expected: fan_out,
                    actual: biases[l].len(),
                });
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("layer {l} parameters"),
                });
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activations,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weights(&self, layer: usize) -> &[T] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[T] {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [T] {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [T] {
        &mut self.biases[layer]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All parameters, weights then biases, layer by layer.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        for l in 0..self.num_layers() {
            cur = self.layer_forward(l, &cur);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer output for a later [`DenseNet::backward_trace`].
    pub fn trace(&self, input: &[T]) -> Result<Trace<T>> {
        self.check_input(input)?;
        let mut layers = Vec::with_capacity(self.num_layers() + 1);
        layers.push(input.to_vec());
        for l in 0..self.num_layers() {
            let next = self.layer_forward(l, &layers[l]);
            layers.push(next);
        }
        Ok(Trace { layers })
    }

    /// Gradients of the scalar loss whose gradient w.r.t. the output is `upstream`.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<GradientTape<T>> {
        let trace = self.trace(input)?;
        let mut tape = GradientTape::zeros_like(self);
        self.backward_trace(&trace, upstream, &mut tape)?;
        Ok(tape)
    }

    /// Accumulates parameter gradients into `tape` and returns the gradient
    /// with respect to the network input.
    pub fn backward_trace(
        &self,
        trace: &Trace<T>,
        upstream: &[T],
        tape: &mut GradientTape<T>,
    ) -> Result<Vec<T>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "upstream gradient",
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        if trace.layers.len() != self.num_layers() + 1 {
            return Err(Error::DimensionMismatch {
                context: "trace depth",
                expected: self.num_layers() + 1,
                actual: trace.layers.len(),
            });
        }
        if !tape.matches(self) {
            return Err(Error::InvalidArgument(
                "gradient tape shape does not match network".into(),
            ));
        }
        let mut delta: Vec<T> = upstream.to_vec();
        for l in (0..self.num_layers()).rev() {
            let fan_in = self.layer_dims[l];
            let out = &trace.layers[l + 1];
            let act = self.activations[l];
            for (d, &o) in delta.iter_mut().zip(out) {
                *d *= act.derivative_from_output(o);
            }
            let input = &trace.layers[l];
            let w = &self.weights[l];
            let gw = &mut tape.weights[l];
            let gb = &mut tape.biases[l];
            let mut next = vec![T::zero(); fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                gb[o] += d;
                let row = o * fan_in;
                let grow = &mut gw[row..row + fan_in];
                for (g, &x) in grow.iter_mut().zip(input) {
                    *g += d * x;
                }
                for (n, &wv) in next.iter_mut().zip(&w[row..row + fan_in]) {
                    *n += d * wv;
                }
            }
            delta = next;
        }
        Ok(delta)
    }

    fn layer_forward(&self, l: usize, input: &[T]) -> Vec<T> {
        let fan_in = self.layer_dims[l];
        let w = &self.weights[l];
        let act = self.activations[l];
        self.biases[l]
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = row.iter().zip(input).fold(b, |acc, (&wv, &x)| acc + wv * x);
                act.apply(z)
            })
            .collect()
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }
}

impl<T: Scalar> GradientTape<T> {
    pub fn zeros_like(net: &DenseNet<T>) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![T::zero(); b.len()]).collect(),
        }
    }

    pub fn matches(&self, net: &DenseNet<T>) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len())
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|v| *v == T::zero())
    }

    /// Entries in the same order as [`DenseNet::params`].
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b))
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()).flatten() {
            *v *= factor;
        }
    }

    pub fn clear(&mut self) {
        self.scale(T::zero());
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidArgument(
            "a network needs at least an input and an output dimension".into(),
        ));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
    }
    Ok(())
}
