use serde::{Deserialize, Serialize};

use super::head::{DistParams, HeadKind};
use super::mask::MaskVector;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::knn::SampleBlock;
use crate::nn::{DenseNet, NetCheckpoint};
use crate::rng;
use crate::scalar::Scalar;

/// Architecture of a [`MappingModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Output width r of every feature map.
    pub map_dim: usize,
    pub map_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub head_kind: HeadKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            map_dim: 1,
            map_hidden: vec![32, 32],
            head_hidden: vec![64, 64],
            head_kind: HeadKind::Gaussian,
        }
    }
}

/// Per-coordinate affine `(v − shift) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(d: usize) -> Self {
        Self {
            shift: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }

    pub fn fit<T: Scalar>(block: &SampleBlock<T>) -> Self {
        let (shift, scale) = block
            .column_moments()
            .into_iter()
            .map(|(mean, sd)| {
                let sd = sd.as_f64();
                (mean.as_f64(), if sd > 0.0 && sd.is_finite() { sd } else { 1.0 })
            })
            .unzip();
        Self { shift, scale }
    }

    pub fn apply<T: Scalar>(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(&v, (&s, &c))| (v - T::lit(s)) / T::lit(c))
            .collect()
    }
}

/// Per-feature maps f_i and the shared surrogate head q_θ.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingModel<T> {
    pub(crate) feature_dims: Vec<usize>,
    pub(crate) map_dim: usize,
    pub(crate) map_nets: Vec<DenseNet<T>>,
    pub(crate) head_net: DenseNet<T>,
    pub(crate) head_kind: HeadKind,
    pub(crate) delta: usize,
    pub(crate) lambda: f64,
    pub(crate) inputs: Vec<Standardizer>,
    pub(crate) target: Standardizer,
    pub(crate) fitted: bool,
}

fn net_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims
}

impl<T: Scalar> MappingModel<T> {
    /// Fresh model with Glorot-initialized networks drawn from `seed`.
    pub fn new(feature_dims: &[usize], cfg: &ModelConfig, seed: u64) -> Result<Self> {
        if feature_dims.is_empty() || feature_dims.contains(&0) || cfg.map_dim == 0 {
            return Err(Error::InvalidArgument(
                "feature widths and the map dimension must be positive".into(),
            ));
        }
        let m = feature_dims.len();
        let r = cfg.map_dim;
        let map_nets = feature_dims
            .iter()
            .enumerate()
            .map(|(i, &d)| DenseNet::new(&net_dims(d, &cfg.map_hidden, r), &mut rng::stream(seed, i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let head_in = if m == 1 { r } else { m * r + m };
        let head_net = DenseNet::new(
            &net_dims(head_in, &cfg.head_hidden, cfg.head_kind.output_dim()),
            &mut rng::stream(seed, m as u64),
        )?;
        Ok(Self {
            feature_dims: feature_dims.to_vec(),
            map_dim: r,
            map_nets,
            head_net,
            head_kind: cfg.head_kind,
            delta: m.saturating_sub(1).min(3),
            lambda: 0.1,
            inputs: feature_dims.iter().map(|&d| Standardizer::identity(d)).collect(),
            target: Standardizer::identity(1),
            fitted: false,
        })
    }

    /// Builds a model from explicit networks, with identity standardization.
    pub fn from_parts(
        feature_dims: &[usize],
        map_nets: Vec<DenseNet<T>>,
        head_net: DenseNet<T>,
        head_kind: HeadKind,
    ) -> Result<Self> {
        let m = feature_dims.len();
        if map_nets.len() != m || m == 0 {
            return Err(Error::DimensionMismatch {
                context: "number of feature maps",
                expected: m,
                actual: map_nets.len(),
            });
        }
        let r = map_nets[0].output_dim();
        for (net, &d) in map_nets.iter().zip(feature_dims) {
            if net.input_dim() != d || net.output_dim() != r {
                return Err(Error::InvalidArgument(format!(
                    "feature map {}→{} does not fit width {d} and map dimension {r}",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        let head_in = if m == 1 { r } else { m * r + m };
        if head_net.input_dim() != head_in || head_net.output_dim() != head_kind.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "head network input",
                expected: head_in,
                actual: head_net.input_dim(),
            });
        }
        Ok(Self {
            feature_dims: feature_dims.to_vec(),
            map_dim: r,
            map_nets,
            head_net,
            head_kind,
            delta: m.saturating_sub(1).min(3),
            lambda: 0.1,
            inputs: feature_dims.iter().map(|&d| Standardizer::identity(d)).collect(),
            target: Standardizer::identity(1),
            fitted: false,
        })
    }

    pub fn feature_dims(&self) -> &[usize] {
        &self.feature_dims
    }

    pub fn m(&self) -> usize {
        self.feature_dims.len()
    }

    pub fn map_dim(&self) -> usize {
        self.map_dim
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head_kind
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn map_net(&self, i: usize) -> &DenseNet<T> {
        &self.map_nets[i]
    }

    pub fn map_net_mut(&mut self, i: usize) -> &mut DenseNet<T> {
        &mut self.map_nets[i]
    }

    pub fn head_net_mut(&mut self) -> &mut DenseNet<T> {
        &mut self.head_net
    }

    pub fn head_net(&self) -> &DenseNet<T> {
        &self.head_net
    }

    /// Whether masks are part of the head input (false for a single feature).
    pub fn uses_masks(&self) -> bool {
        self.m() > 1
    }

    pub fn head_input_dim(&self) -> usize {
        self.head_net.input_dim()
    }

    /// Standardization fitted on the training data (identity before training).
    pub fn input_standardizer(&self, i: usize) -> &Standardizer {
        &self.inputs[i]
    }

    pub fn target_standardizer(&self) -> &Standardizer {
        &self.target
    }

    pub(crate) fn fit_standardization(&mut self, dataset: &Dataset<T>) {
        self.inputs = dataset.features.iter().map(Standardizer::fit).collect();
        self.target = match self.head_kind {
            HeadKind::Gaussian => Standardizer::fit(&dataset.target),
            HeadKind::Bernoulli => Standardizer::identity(1),
        };
        self.fitted = true;
    }

    pub(crate) fn check_dataset(&self, dataset: &Dataset<T>) -> Result<()> {
        if dataset.feature_dims() != self.feature_dims {
            return Err(Error::InvalidArgument(format!(
                "dataset feature widths {:?} do not match the model's {:?}",
                dataset.feature_dims(),
                self.feature_dims
            )));
        }
        Ok(())
    }

    /// Head input from standardized-space map outputs `maps[i]` and a mask.
    pub(crate) fn assemble(&self, maps: &[&[T]], mask: &MaskVector) -> Vec<T> {
        let r = self.map_dim;
        if !self.uses_masks() {
            return maps[0].to_vec();
        }
        let m = self.m();
        let mut input = vec![T::zero(); m * r + m];
        for i in 0..m {
            if mask.get(i) {
                input[i * r..(i + 1) * r].copy_from_slice(maps[i]);
                input[m * r + i] = T::one();
            }
        }
        input
    }

    fn check_mask(&self, mask: &MaskVector) -> Result<()> {
        if mask.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context: "mask length",
                expected: self.m(),
                actual: mask.len(),
            });
        }
        Ok(())
    }

    /// f_i applied to one raw feature row.
    pub fn map_row(&self, i: usize, row: &[T]) -> Result<Vec<T>> {
        if row.len() != self.feature_dims[i] {
            return Err(Error::DimensionMismatch {
                context: "feature width",
                expected: self.feature_dims[i],
                actual: row.len(),
            });
        }
        self.map_nets[i].forward(&self.inputs[i].apply(row))
    }

    /// Samples of f_i(X_i) for an `n × d_i` block of raw feature values.
    pub fn transform_feature(&self, i: usize, block: &SampleBlock<T>) -> Result<SampleBlock<T>> {
        if i >= self.m() {
            return Err(Error::InvalidArgument(format!("feature {i} out of range")));
        }
        let mut values = Vec::with_capacity(block.n() * self.map_dim);
        for row in block.rows() {
            values.extend(self.map_row(i, row)?);
        }
        SampleBlock::new(block.n(), self.map_dim, values)
    }

    /// Mapped samples of every feature of `dataset`.
    pub fn transform(&self, dataset: &Dataset<T>) -> Result<Vec<SampleBlock<T>>> {
        self.check_dataset(dataset)?;
        (0..self.m())
            .map(|i| self.transform_feature(i, &dataset.features[i]))
            .collect()
    }

    /// q(Y | F_W(v), W) for raw feature rows `features[i]`, in target units.
    pub fn surrogate_forward(&self, features: &[&[T]], mask: &MaskVector) -> Result<DistParams<T>> {
        if features.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context: "number of features",
                expected: self.m(),
                actual: features.len(),
            });
        }
        self.check_mask(mask)?;
        let maps = features
            .iter()
            .enumerate()
            .map(|(i, row)| self.map_row(i, row))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[T]> = maps.iter().map(Vec::as_slice).collect();
        let out = self.head_net.forward(&self.assemble(&refs, mask))?;
        Ok(self.to_target_units(DistParams::from_output(self.head_kind, &out)))
    }

    fn to_target_units(&self, params: DistParams<T>) -> DistParams<T> {
        match params {
            DistParams::Gaussian { mean, log_var } => {
                let (shift, scale) = (self.target.shift[0], self.target.scale[0]);
                DistParams::Gaussian {
                    mean: mean * T::lit(scale) + T::lit(shift),
                    log_var: log_var + T::lit(2.0 * scale.ln()),
                }
            }
            p => p,
        }
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            feature_dims: self.feature_dims.clone(),
            map_dim: self.map_dim,
            head_kind: self.head_kind,
            delta: self.delta,
            lambda: self.lambda,
            map_nets: self.map_nets.iter().map(DenseNet::to_checkpoint).collect(),
            head_net: self.head_net.to_checkpoint(),
            input_standardization: self.inputs.clone(),
            target_standardization: self.target.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        let map_nets = ckpt
            .map_nets
            .iter()
            .map(DenseNet::from_checkpoint)
            .collect::<Result<Vec<_>>>()?;
        let head_net = DenseNet::from_checkpoint(&ckpt.head_net)?;
        let mut model = Self::from_parts(&ckpt.feature_dims, map_nets, head_net, ckpt.head_kind)?;
        if model.map_dim != ckpt.map_dim {
            return Err(Error::DimensionMismatch {
                context: "map dimension",
                expected: ckpt.map_dim,
                actual: model.map_dim,
            });
        }
        let widths_ok = ckpt.input_standardization.len() == model.m()
            && ckpt
                .input_standardization
                .iter()
                .zip(&ckpt.feature_dims)
                .all(|(s, &d)| s.shift.len() == d && s.scale.len() == d)
            && ckpt.target_standardization.shift.len() == 1
            && ckpt.target_standardization.scale.len() == 1;
        if !widths_ok {
            return Err(Error::InvalidArgument(
                "standardization does not match the feature widths".into(),
            ));
        }
        model.delta = ckpt.delta;
        model.lambda = ckpt.lambda;
        model.inputs = ckpt.input_standardization.clone();
        model.target = ckpt.target_standardization.clone();
        model.fitted = true;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(json)?)
    }
}

/// Serialized [`MappingModel`]: every network plus the model metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub feature_dims: Vec<usize>,
    pub map_dim: usize,
    pub head_kind: HeadKind,
    pub delta: usize,
    pub lambda: f64,
    pub map_nets: Vec<NetCheckpoint>,
    pub head_net: NetCheckpoint,
    pub input_standardization: Vec<Standardizer>,
    pub target_standardization: Standardizer,
}
