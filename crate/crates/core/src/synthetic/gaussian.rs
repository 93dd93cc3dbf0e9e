use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::knn::SampleBlock;
use crate::rng;

/// Standard bivariate normal pair with correlation `rho`.
pub fn gaussian_pair(n: usize, rho: f64, seed: u64) -> Result<(SampleBlock<f64>, SampleBlock<f64>)> {
    let mut rng = rng::seeded(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let c = (1.0 - rho * rho).sqrt();
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        x.push(a);
        y.push(rho * a + c * b);
    }
    Ok((SampleBlock::from_column(&x)?, SampleBlock::from_column(&y)?))
}

/// Chain X → Z → Y with unit-variance Gaussian noise at every step.
/// Returns `(x, z, y)`; X ⟂ Y | Z holds exactly.
pub fn gaussian_chain(
    n: usize,
    seed: u64,
) -> Result<(SampleBlock<f64>, SampleBlock<f64>, SampleBlock<f64>)> {
    let mut rng = rng::seeded(seed);
    let (mut x, mut z, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = a + Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let c: f64 = b + Distribution::<f64>::sample(&StandardNormal, &mut rng);
        x.push(a);
        z.push(b);
        y.push(c);
    }
    Ok((
        SampleBlock::from_column(&x)?,
        SampleBlock::from_column(&z)?,
        SampleBlock::from_column(&y)?,
    ))
}
