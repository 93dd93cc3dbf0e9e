//! k-nearest-neighbor MI and CMI estimators under the max-norm.

mod digamma;
mod estimators;
mod index;

pub use digamma::{digamma, EULER_GAMMA};
pub use estimators::{fp_cmi, knn_distances, ksg_mi, CmiEstimator};
pub use index::{NeighborIndex, BRUTE_FORCE_BELOW};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `n × d` matrix of samples, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBlock<T> {
    n: usize,
    d: usize,
    values: Vec<T>,
}

impl<T: Scalar> SampleBlock<T> {
    pub fn new(n: usize, d: usize, values: Vec<T>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "sample block needs n >= 1 and d >= 1, got {n} x {d}"
            )));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                context: "sample block values",
                expected: n * d,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("sample block row {} column {}", pos / d, pos % d),
            });
        }
        Ok(Self { n, d, values })
    }

    pub fn from_column(values: &[T]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    /// Column-wise concatenation of blocks with equal sample counts.
    pub fn hstack(blocks: &[&SampleBlock<T>]) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("hstack of zero blocks".into()))?;
        let n = first.n;
        for b in blocks {
            if b.n != n {
                return Err(Error::DimensionMismatch {
                    context: "sample count",
                    expected: n,
                    actual: b.n,
                });
            }
        }
        let d: usize = blocks.iter().map(|b| b.d).sum();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            for b in blocks {
                values.extend_from_slice(b.row(i));
            }
        }
        Ok(Self { n, d, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.rows().map(|r| r[j]).collect()
    }

    /// New block whose row `i` is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut values = Vec::with_capacity(order.len() * self.d);
        for &i in order {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n: order.len(),
            d: self.d,
            values,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.n, self.d, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Scalar>(&self) -> SampleBlock<U> {
        SampleBlock {
            n: self.n,
            d: self.d,
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Per-column mean and standard deviation (population form).
    pub fn column_moments(&self) -> Vec<(T, T)> {
        let nf = T::from_usize_lossy(self.n);
        (0..self.d)
            .map(|j| {
                let mean = self.rows().map(|r| r[j]).sum::<T>() / nf;
                let var = self.rows().map(|r| (r[j] - mean).powi(2)).sum::<T>() / nf;
                (mean, var.sqrt())
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Classic KSG counting with strict inequalities.
    #[default]
    Strict,
    /// Discrete–continuous mixture handling: a zero k-NN radius switches the
    /// point to multiplicity counting.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub tie_mode: TieMode,
    /// Scale of uniform noise added to every coordinate, relative to the
    /// column's standard deviation. Zero disables it.
    pub jitter: f64,
    /// Seed for the jitter noise.
    pub seed: u64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            tie_mode: TieMode::Strict,
            jitter: 0.0,
            seed: 0,
        }
    }
}

impl KnnConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn mixed(mut self) -> Self {
        self.tie_mode = TieMode::Mixed;
        self
    }
}
