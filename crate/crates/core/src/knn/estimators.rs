use rand::Rng;

use super::digamma::digamma_table;
use super::index::NeighborIndex;
use super::{KnnConfig, SampleBlock, TieMode};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Max-norm distance from every point to its k-th nearest other point.
pub fn knn_distances<T: Scalar>(points: &SampleBlock<T>, k: usize) -> Result<Vec<T>> {
    check_k(k, points.n())?;
    Ok(NeighborIndex::build(points).all_kth_distances(k))
}

/// KSG estimate of I(X;Y) in nats.
pub fn ksg_mi<T: Scalar>(x: &SampleBlock<T>, y: &SampleBlock<T>, cfg: &KnnConfig) -> Result<T> {
    CmiEstimator::new(y, None, *cfg)?.estimate(x)
}

/// Frenzel–Pompe estimate of I(X;Y|Z) in nats.
pub fn fp_cmi<T: Scalar>(
    x: &SampleBlock<T>,
    y: &SampleBlock<T>,
    z: &SampleBlock<T>,
    cfg: &KnnConfig,
) -> Result<T> {
    CmiEstimator::new(y, Some(z), *cfg)?.estimate(x)
}

/// CMI estimator with the `(y, z)` side prepared once, so many `x` samples
/// (e.g. permutations) can be scored against the same `y` and `z`.
///
/// Without `z` the estimator reduces to KSG: every point then has
/// `n_z = n − 1`, and ψ(n_z + 1) = ψ(n).
#[derive(Clone, Debug)]
pub struct CmiEstimator<T> {
    cfg: KnnConfig,
    n: usize,
    yz: SampleBlock<T>,
    z: Option<SampleBlock<T>>,
    yz_index: NeighborIndex<T>,
    z_index: Option<NeighborIndex<T>>,
    psi: Vec<f64>,
}

impl<T: Scalar> CmiEstimator<T> {
    pub fn new(y: &SampleBlock<T>, z: Option<&SampleBlock<T>>, cfg: KnnConfig) -> Result<Self> {
        let n = y.n();
        if let Some(z) = z {
            if z.n() != n {
                return Err(Error::DimensionMismatch {
                    context: "conditioning sample count",
                    expected: n,
                    actual: z.n(),
                });
            }
        }
        check_k(cfg.k, n)?;
        if !(cfg.jitter >= 0.0) {
            return Err(Error::InvalidArgument("jitter must be non-negative".into()));
        }
        let y = jitter(y, &cfg, 1)?;
        let z = z.map(|z| jitter(z, &cfg, 2)).transpose()?;
        let yz = match &z {
            Some(z) => SampleBlock::hstack(&[&y, z])?,
            None => y,
        };
        let yz_index = NeighborIndex::build(&yz);
        let z_index = z.as_ref().map(NeighborIndex::build);
        Ok(Self {
            cfg,
            n,
            yz,
            z,
            yz_index,
            z_index,
            psi: digamma_table(n + 1),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &KnnConfig {
        &self.cfg
    }

    pub fn estimate(&self, x: &SampleBlock<T>) -> Result<T> {
        if x.n() != self.n {
            return Err(Error::DimensionMismatch {
                context: "sample count",
                expected: self.n,
                actual: x.n(),
            });
        }
        let x = jitter(x, &self.cfg, 3)?;
        let xz = match &self.z {
            Some(z) => SampleBlock::hstack(&[&x, z])?,
            None => x.clone(),
        };
        let joint = SampleBlock::hstack(&[&x, &self.yz])?;
        let joint_index = NeighborIndex::build(&joint);
        let xz_index = NeighborIndex::build(&xz);
        let k = self.cfg.k;
        let psi = &self.psi;
        let mixed = self.cfg.tie_mode == TieMode::Mixed;

        let radii = joint_index.all_kth_distances(k);
        let mut acc = 0.0f64;
        for (i, &rho) in radii.iter().enumerate() {
            let q = joint.row(i);
            if mixed && rho == T::zero() {
                let zero = T::zero();
                let ties = joint_index.count_within(q, zero, false) - 1;
                let n_xz = xz_index.count_within(xz.row(i), zero, false) - 1;
                let n_yz = self.yz_index.count_within(self.yz.row(i), zero, false) - 1;
                let n_z = self.marginal_z_count(i, zero, false);
                acc += psi[ties] - ((n_xz + 1) as f64).ln() - ((n_yz + 1) as f64).ln()
                    + ((n_z + 1) as f64).ln();
            } else {
                // The query point itself sits at distance 0 and is inside the
                // strict ball only when rho > 0.
                let own = usize::from(rho > T::zero());
                let n_xz = xz_index.count_within(xz.row(i), rho, true) - own;
                let n_yz = self.yz_index.count_within(self.yz.row(i), rho, true) - own;
                let n_z = self.marginal_z_count(i, rho, true);
                acc += psi[k] - psi[n_xz + 1] - psi[n_yz + 1] + psi[n_z + 1];
            }
        }
        Ok(T::lit(acc / self.n as f64))
    }

    fn marginal_z_count(&self, i: usize, radius: T, strict: bool) -> usize {
        match (&self.z, &self.z_index) {
            (Some(z), Some(index)) => {
                let own = usize::from(!strict || radius > T::zero());
                index.count_within(z.row(i), radius, strict) - own
            }
            _ => self.n - 1,
        }
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::TooFewSamples { k, n });
    }
    Ok(())
}

fn jitter<T: Scalar>(block: &SampleBlock<T>, cfg: &KnnConfig, stream: u64) -> Result<SampleBlock<T>> {
    if cfg.jitter == 0.0 {
        return Ok(block.clone());
    }
    let scales: Vec<T> = block
        .column_moments()
        .into_iter()
        .map(|(_, sd)| (if sd > T::zero() { sd } else { T::one() }) * T::lit(cfg.jitter))
        .collect();
    let mut rng = rng::stream(cfg.seed, stream);
    let d = block.dim();
    let values = block
        .values()
        .iter()
        .enumerate()
        .map(|(idx, &v)| v + scales[idx % d] * T::lit(rng.gen_range(-1.0..1.0)))
        .collect();
    SampleBlock::new(block.n(), d, values)
}
