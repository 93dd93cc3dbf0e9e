use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::head::{jeffreys_with_grad, log_likelihood_grad, DistParams};
use super::head::log_likelihood;
use super::mask::{MaskSampler, MaskVector};
use super::model::MappingModel;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamConfig, GradientTape, OptimizerState, Trace};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the information-efficiency regularizer.
    pub lambda: f64,
    pub batch_size: usize,
    pub iterations: usize,
    /// Largest conditioning set size; masks keep between 1 and `delta + 1` features.
    pub delta: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            batch_size: 256,
            iterations: 5000,
            delta: 3,
            seed: 0,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be a non-negative number, got {}",
                self.lambda
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Per-iteration training curves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Negative objective −J.
    pub loss: Vec<f64>,
    /// Mean log-likelihood term.
    pub log_likelihood: Vec<f64>,
    /// Regularizer (1/n) Σ_i Σ_k w_i |d − D|, before the λ factor.
    pub regularizer: Vec<f64>,
}

/// One minibatch in standardized units, with its masks and per-feature shuffles.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// `features[i][k]` is the row of feature `i` for sample `k`.
    pub features: Vec<Vec<Vec<T>>>,
    pub y: Vec<T>,
    pub masks: Vec<MaskVector>,
    /// `shuffles[i][k]` is the sample whose x_i replaces sample k's in v''.
    pub shuffles: Vec<Vec<usize>>,
}

impl<T> Batch<T> {
    fn len(&self) -> usize {
        self.y.len()
    }
}

/// Value of J on a batch, its two terms, and dJ/dθ for every network.
#[derive(Clone, Debug)]
pub struct Objective<T> {
    pub value: f64,
    pub log_likelihood: f64,
    pub regularizer: f64,
    pub maps: Vec<GradientTape<T>>,
    pub head: GradientTape<T>,
}

/// The regularized block-dropout objective J on one batch, with the
/// gradient of J with respect to every parameter.
pub fn objective_and_gradient<T: Scalar>(
    model: &MappingModel<T>,
    batch: &Batch<T>,
    lambda: f64,
) -> Result<Objective<T>> {
    let n = batch.len();
    let m = model.m();
    let r = model.map_dim;
    let kind = model.head_kind;
    let inv_n = T::lit(1.0 / n as f64);
    let lam = T::lit(lambda);

    let map_traces: Vec<Vec<Trace<T>>> = (0..m)
        .map(|i| {
            batch.features[i]
                .iter()
                .map(|row| model.map_nets[i].trace(row))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let map_out = |i: usize, k: usize| map_traces[i][k].output();

    let mut head_traces = Vec::with_capacity(n);
    let mut head_up: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut ll_sum = 0.0;
    for k in 0..n {
        let maps: Vec<&[T]> = (0..m).map(|i| map_out(i, k)).collect();
        let trace = model.head_net.trace(&model.assemble(&maps, &batch.masks[k]))?;
        let out = trace.output();
        ll_sum += log_likelihood(&DistParams::from_output(kind, out), batch.y[k]).as_f64();
        head_up.push(log_likelihood_grad(kind, out, batch.y[k]).into_iter().map(|g| g * inv_n).collect());
        head_traces.push(trace);
    }

    let mut head_tape = GradientTape::zeros_like(&model.head_net);
    // Upstream gradient into each map output f_i(x_i^(k)).
    let mut map_up: Vec<Vec<Vec<T>>> = vec![vec![vec![T::zero(); r]; n]; m];
    let mut reg_sum = 0.0;

    if lambda > 0.0 {
        for i in 0..m {
            let sigma = &batch.shuffles[i];
            for k in 0..n {
                let mask = &batch.masks[k];
                if !mask.get(i) {
                    continue;
                }
                let j = sigma[k];
                let maps: Vec<&[T]> = (0..m).map(|l| if l == i { map_out(i, j) } else { map_out(l, k) }).collect();
                let shuffled = model.head_net.trace(&model.assemble(&maps, mask))?;
                let (big_d, ga, gb) = jeffreys_with_grad(kind, head_traces[k].output(), shuffled.output());
                let (fa, fb) = (map_out(i, k), map_out(i, j));
                let small_d = fa.iter().zip(fb).map(|(&a, &b)| (a - b) * (a - b)).fold(T::zero(), |s, v| s + v);
                let gap = small_d - big_d;
                reg_sum += gap.abs().as_f64();
                let sign = if gap > T::zero() {
                    T::one()
                } else if gap < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                if sign == T::zero() {
                    continue;
                }
                // J contains −λ/n·|d − D|.
                let coef = lam * inv_n * sign;
                for (u, g) in head_up[k].iter_mut().zip(&ga) {
                    *u += coef * *g;
                }
                let scaled: Vec<T> = gb.iter().map(|&g| coef * g).collect();
                let grad_in = model.head_net.backward_trace(&shuffled, &scaled, &mut head_tape)?;
                scatter(model, &grad_in, mask, |l| if l == i { j } else { k }, &mut map_up);
                for c in 0..r {
                    let g = -coef * T::lit(2.0) * (fa[c] - fb[c]);
                    map_up[i][k][c] += g;
                    map_up[i][j][c] -= g;
                }
            }
        }
    }

    for k in 0..n {
        let grad_in = model.head_net.backward_trace(&head_traces[k], &head_up[k], &mut head_tape)?;
        scatter(model, &grad_in, &batch.masks[k], |_| k, &mut map_up);
    }

    let mut map_tapes: Vec<GradientTape<T>> = model.map_nets.iter().map(GradientTape::zeros_like).collect();
    for i in 0..m {
        for k in 0..n {
            if map_up[i][k].iter().any(|&g| g != T::zero()) {
                model.map_nets[i].backward_trace(&map_traces[i][k], &map_up[i][k], &mut map_tapes[i])?;
            }
        }
    }

    let log_likelihood = ll_sum / n as f64;
    let regularizer = reg_sum / n as f64;
    Ok(Objective {
        value: log_likelihood - lambda * regularizer,
        log_likelihood,
        regularizer,
        maps: map_tapes,
        head: head_tape,
    })
}

/// Adds the head-input gradient of each kept block to the map output of
/// sample `owner(block)`.
fn scatter<T: Scalar>(
    model: &MappingModel<T>,
    grad_in: &[T],
    mask: &MaskVector,
    owner: impl Fn(usize) -> usize,
    map_up: &mut [Vec<Vec<T>>],
) {
    let r = model.map_dim;
    for l in 0..model.m() {
        if model.uses_masks() && !mask.get(l) {
            continue;
        }
        let dst = &mut map_up[l][owner(l)];
        for (d, &g) in dst.iter_mut().zip(&grad_in[l * r..(l + 1) * r]) {
            *d += g;
        }
    }
}

/// Fits `model` to `dataset` by gradient ascent on the regularized
/// block-dropout likelihood.
///
/// On the first call the model also fits a per-coordinate standardization of
/// the features (and of a continuous target); the maps and the head operate
/// on standardized values from then on.
pub fn train<T: Scalar>(model: &mut MappingModel<T>, dataset: &Dataset<T>, cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    model.check_dataset(dataset)?;
    if dataset.target.dim() != 1 {
        return Err(Error::InvalidArgument("the target must be a single column".into()));
    }
    if !model.fitted {
        model.fit_standardization(dataset);
    }
    model.delta = cfg.delta;
    model.lambda = cfg.lambda;
    let m = model.m();
    let n = dataset.n();
    let rows: Vec<Vec<Vec<T>>> = (0..m)
        .map(|i| dataset.features[i].rows().map(|row| model.inputs[i].apply(row)).collect())
        .collect();
    let ys: Vec<T> = dataset.target.rows().map(|row| model.target.apply(row)[0]).collect();
    let sampler = if model.uses_masks() {
        Some(MaskSampler::new(m, cfg.delta)?)
    } else {
        None
    };
    let batch_size = cfg.batch_size.min(n);
    let mut rng = rng::stream(cfg.seed, 0);
    let mut map_states: Vec<OptimizerState<T>> = model
        .map_nets
        .iter()
        .map(|net| OptimizerState::new(net, cfg.optimizer))
        .collect();
    let mut head_state = OptimizerState::new(&model.head_net, cfg.optimizer);
    let mut history = TrainHistory::default();

    for iteration in 0..cfg.iterations {
        let picked = index::sample(&mut rng, n, batch_size).into_vec();
        let masks = picked
            .iter()
            .map(|_| match &sampler {
                Some(s) => s.sample(&mut rng),
                None => MaskVector::ones(1),
            })
            .collect();
        let shuffles = (0..m)
            .map(|_| {
                let mut s: Vec<usize> = (0..batch_size).collect();
                s.shuffle(&mut rng);
                s
            })
            .collect();
        let batch = Batch {
            features: rows
                .iter()
                .map(|feature| picked.iter().map(|&p| feature[p].clone()).collect())
                .collect(),
            y: picked.iter().map(|&p| ys[p]).collect(),
            masks,
            shuffles,
        };
        let obj = objective_and_gradient(model, &batch, cfg.lambda)?;
        if !obj.log_likelihood.is_finite() {
            return Err(Error::Diverged {
                iteration,
                term: "log-likelihood",
            });
        }
        if !obj.regularizer.is_finite() {
            return Err(Error::Diverged {
                iteration,
                term: "regularizer",
            });
        }
        for (i, (net, state)) in model.map_nets.iter_mut().zip(&mut map_states).enumerate() {
            adam_step(net, &obj.maps[i], state, true)?;
        }
        adam_step(&mut model.head_net, &obj.head, &mut head_state, true)?;
        history.loss.push(-obj.value);
        history.log_likelihood.push(obj.log_likelihood);
        history.regularizer.push(obj.regularizer);
        if iteration % 500 == 0 {
            log::debug!("iteration {iteration}: loss {:.4}", -obj.value);
        }
    }
    Ok(history)
}
