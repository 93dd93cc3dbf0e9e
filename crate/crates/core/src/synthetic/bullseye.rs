use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::SampleBlock;
use crate::rng;

/// Support of the radius R: the union of two disjoint intervals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rings {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl Rings {
    /// R ∈ [1, 2] ∪ [3, 4], used by the data generators.
    pub const WIDE: Rings = Rings {
        inner: (1.0, 2.0),
        outer: (3.0, 4.0),
    };

    /// R ∈ [0.25, 0.5] ∪ [0.75, 1], the convention the closed-form output density is written in.
    pub const QUARTER: Rings = Rings {
        inner: (0.25, 0.5),
        outer: (0.75, 1.0),
    };

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.inner;
        let (c, d) = self.outer;
        if ![a, b, c, d].iter().all(|v| v.is_finite()) || !(a < b) || !(c < d) || !(b < c) {
            return Err(Error::InvalidArgument(format!(
                "rings must be ordered, disjoint intervals, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        (self.inner.1 - self.inner.0) + (self.outer.1 - self.outer.0)
    }

    /// Draws R uniformly over the union.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let inner_len = self.inner.1 - self.inner.0;
        let u = rng.gen_range(0.0..self.total_length());
        if u < inner_len {
            self.inner.0 + u
        } else {
            self.outer.0 + (u - inner_len)
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        (self.inner.0..=self.inner.1).contains(&r) || (self.outer.0..=self.outer.1).contains(&r)
    }
}

impl Default for Rings {
    fn default() -> Self {
        Rings::WIDE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BullseyeConfig {
    /// Half-width of the uniform output noise.
    pub epsilon: f64,
    pub n: usize,
    pub rings: Rings,
    pub seed: u64,
}

impl BullseyeConfig {
    pub fn new(epsilon: f64, n: usize, seed: u64) -> Self {
        Self {
            epsilon,
            n,
            rings: Rings::WIDE,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rings.validate()?;
        check_noise(self.epsilon)?;
        if self.n == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_noise(epsilon: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "noise half-width must lie in [0, 0.5], got {epsilon}"
        )));
    }
    Ok(())
}

/// Uniform noise on [−ε, ε]; exactly zero when ε = 0.
pub(crate) fn uniform_noise<R: Rng + ?Sized>(rng: &mut R, epsilon: f64) -> f64 {
    if epsilon == 0.0 {
        0.0
    } else {
        rng.gen_range(-epsilon..=epsilon)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bullseye2d {
    /// `n × 2` points (R cos Θ, R sin Θ).
    pub x: SampleBlock<f64>,
    /// `n × 1`, Y = R + N.
    pub y: SampleBlock<f64>,
    /// `n × 1` latent radius.
    pub r: SampleBlock<f64>,
}

pub fn gen_bullseye_2d(cfg: &BullseyeConfig) -> Result<Bullseye2d> {
    cfg.validate()?;
    let mut rng = rng::seeded(cfg.seed);
    let mut x = Vec::with_capacity(2 * cfg.n);
    let mut y = Vec::with_capacity(cfg.n);
    let mut r = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let radius = cfg.rings.sample(&mut rng);
        let theta = rng.gen_range(0.0..2.0 * PI);
        x.push(radius * theta.cos());
        x.push(radius * theta.sin());
        y.push(radius + uniform_noise(&mut rng, cfg.epsilon));
        r.push(radius);
    }
    Ok(Bullseye2d {
        x: SampleBlock::new(cfg.n, 2, x)?,
        y: SampleBlock::new(cfg.n, 1, y)?,
        r: SampleBlock::new(cfg.n, 1, r)?,
    })
}
