//! Conditional independence tests: a k-NN CMI statistic against a
//! permutation null.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{CmiEstimator, KnnConfig, NeighborIndex, SampleBlock, TieMode};
use crate::rng;
use crate::scalar::Scalar;


/// Stream reserved for neighborhood tie-breaking; permutation `b` uses stream `b`.
const NEIGHBORHOOD_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CiConfig {
    /// Neighbor count of the CMI statistic.
    pub k_cmi: usize,
    pub num_permutations: usize,
    /// Size of the z-space neighborhoods used by the local permutation.
    pub k_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    pub tie_mode: TieMode,
}

impl Default for CiConfig {
    fn default() -> Self {
        Self {
            k_cmi: 100,
            num_permutations: 1000,
            k_perm: 5,
            alpha: 0.05,
            seed: 0,
            tie_mode: TieMode::Strict,
        }
    }
}

impl CiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_cmi == 0 || self.k_perm == 0 || self.num_permutations == 0 {
            return Err(Error::InvalidArgument(
                "k_cmi, k_perm and num_permutations must be positive".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Estimator settings of the statistic.
    pub fn knn(&self) -> KnnConfig {
        KnnConfig {
            k: self.k_cmi,
            tie_mode: self.tie_mode,
            jitter: 0.0,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiTestResult {
    /// CMI (or MI) estimate in nats.
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
    pub null_samples: Vec<f64>,
}

/// Neighborhood of every point in z-space: the point itself plus its
/// `k_perm` nearest other points. Points tied at the boundary distance are
/// chosen at random so that repeated z values do not all share one
/// neighborhood.
pub fn neighborhoods<T: Scalar, R: Rng + ?Sized>(
    z: &SampleBlock<T>,
    k_perm: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let n = z.n();
    if k_perm == 0 || k_perm >= n {
        return Err(Error::InvalidArgument(format!(
            "k_perm = {k_perm} must lie in [1, n) with n = {n}"
        )));
    }
    let index = NeighborIndex::build(z);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let q = z.row(i);
        let radius = index.kth_distance(q, k_perm, Some(i));
        let mut hood: Vec<usize> = index
            .rows_within(q, radius, true)
            .into_iter()
            .filter(|&j| j != i)
            .collect();
        let mut edge: Vec<usize> = index
            .rows_within(q, radius, false)
            .into_iter()
            .filter(|&j| j != i && !hood.contains(&j))
            .collect();
        edge.sort_unstable();
        let (chosen, _) = edge.partial_shuffle(rng, k_perm - hood.len());
        hood.extend_from_slice(chosen);
        hood.push(i);
        hood.sort_unstable();
        out.push(hood);
    }
    Ok(out)
}

/// Draws an index map `π` with `π(i)` in the neighborhood of `i`.
///
/// Points are visited in random order and take a random unused member of
/// their neighborhood; when every member is taken, one is reused.
pub fn permute_within<R: Rng + ?Sized>(hoods: &[Vec<usize>], rng: &mut R) -> Vec<usize> {
    let n = hoods.len();
    let mut visit: Vec<usize> = (0..n).collect();
    visit.shuffle(rng);
    let mut used = vec![false; n];
    let mut perm = vec![0; n];
    let mut buf = Vec::new();
    for i in visit {
        buf.clear();
        buf.extend_from_slice(&hoods[i]);
        buf.shuffle(rng);
        let pick = buf.iter().copied().find(|&j| !used[j]).unwrap_or(buf[0]);
        used[pick] = true;
        perm[i] = pick;
    }
    perm
}

/// Local permutation of `[n]` constrained to `k_perm`-neighborhoods in z-space.
pub fn local_permutation<T: Scalar, R: Rng + ?Sized>(
    z: &SampleBlock<T>,
    k_perm: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let hoods = neighborhoods(z, k_perm, rng)?;
    Ok(permute_within(&hoods, rng))
}

/// Permutation p-value `(1 + #{null ≥ statistic}) / (B + 1)`.
pub fn permutation_p_value(statistic: f64, null: &[f64]) -> f64 {
    let exceed = null.iter().filter(|&&v| v >= statistic).count();
    (1 + exceed) as f64 / (null.len() + 1) as f64
}

/// Tests X ⟂ Y | Z, or X ⟂ Y when `z` is `None`.
///
/// The statistic is the k-NN CMI (or MI) estimate; the null re-estimates it
/// with x locally permuted within z-neighborhoods, or fully permuted when
/// there is no z. Permutation `b` draws from its own derived seed, so the
/// result does not depend on how the work is scheduled.
pub fn ci_test<T: Scalar>(
    x: &SampleBlock<T>,
    y: &SampleBlock<T>,
    z: Option<&SampleBlock<T>>,
    cfg: &CiConfig,
) -> Result<CiTestResult> {
    cfg.validate()?;
    let n = x.n();
    for (context, other) in [("y sample count", Some(y)), ("z sample count", z)] {
        if let Some(other) = other {
            if other.n() != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual: other.n(),
                });
            }
        }
    }
    if n <= cfg.k_cmi {
        return Err(Error::InsufficientSamples { n, k: cfg.k_cmi });
    }
    let estimator = CmiEstimator::new(y, z, cfg.knn())?;
    let statistic = estimator.estimate(x)?.as_f64();
    let hoods = z
        .map(|z| neighborhoods(z, cfg.k_perm, &mut rng::stream(cfg.seed, NEIGHBORHOOD_STREAM)))
        .transpose()?;
    let null_samples = (0..cfg.num_permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(cfg.seed, b as u64);
            let perm = match &hoods {
                Some(hoods) => permute_within(hoods, &mut rng),
                None => {
                    let mut p: Vec<usize> = (0..n).collect();
                    p.shuffle(&mut rng);
                    p
                }
            };
            estimator.estimate(&x.select_rows(&perm)).map(|v| v.as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    let p_value = permutation_p_value(statistic, &null_samples);
    Ok(CiTestResult {
        statistic,
        p_value,
        independent: p_value > cfg.alpha,
        null_samples,
    })
}
