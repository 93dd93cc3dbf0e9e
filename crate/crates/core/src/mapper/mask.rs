use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block-dropout mask: `bits[i]` keeps feature `i`'s mapped block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaskVector {
    pub bits: Vec<bool>,
}

impl MaskVector {
    pub fn ones(m: usize) -> Self {
        Self { bits: vec![true; m] }
    }

    pub fn from_indices(m: usize, keep: &[usize]) -> Result<Self> {
        let mut bits = vec![false; m];
        for &i in keep {
            *bits.get_mut(i).ok_or_else(|| {
                Error::InvalidArgument(format!("mask index {i} out of range for m = {m}"))
            })? = true;
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }
}

/// Uniform distribution over length-`m` masks with between 1 and `Δ + 1` ones.
///
/// The popcount `c` is drawn with weight `C(m, c)`, then a uniform `c`-subset.
#[derive(Clone, Debug)]
pub struct MaskSampler {
    m: usize,
    max_ones: usize,
    cumulative: Vec<f64>,
    /// Set when `Δ + 1` exceeded `m` and was clamped.
    pub warning: Option<String>,
}

impl MaskSampler {
    pub fn new(m: usize, delta: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("masks need at least one feature".into()));
        }
        let mut warning = None;
        let mut max_ones = delta.saturating_add(1);
        if max_ones > m {
            let msg = format!("delta + 1 = {max_ones} exceeds m = {m}; clamped to {m}");
            log::warn!("{msg}");
            warning = Some(msg);
            max_ones = m;
        }
        let mut cumulative = Vec::with_capacity(max_ones);
        let mut binom = 1.0f64;
        let mut total = 0.0;
        for c in 1..=max_ones {
            binom = binom * (m + 1 - c) as f64 / c as f64;
            total += binom;
            cumulative.push(total);
        }
        for v in &mut cumulative {
            *v /= total;
        }
        Ok(Self {
            m,
            max_ones,
            cumulative,
            warning,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn max_ones(&self) -> usize {
        self.max_ones
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MaskVector {
        let u: f64 = rng.gen();
        let c = 1 + self
            .cumulative
            .iter()
            .position(|&p| u < p)
            .unwrap_or(self.max_ones - 1);
        let mut bits = vec![false; self.m];
        for i in index::sample(rng, self.m, c) {
            bits[i] = true;
        }
        MaskVector { bits }
    }
}

/// One draw from [`MaskSampler::new(m, delta)`](MaskSampler::new).
pub fn sample_mask<R: Rng + ?Sized>(m: usize, delta: usize, rng: &mut R) -> Result<MaskVector> {
    Ok(MaskSampler::new(m, delta)?.sample(rng))
}
