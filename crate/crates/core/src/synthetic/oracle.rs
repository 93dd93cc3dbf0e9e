//! Exact I(X;Y) for the bullseye: I = h(Y) − log(2ε), with h(Y) integrated
//! numerically from the density of Y = R + N.

use super::bullseye::Rings;
use crate::error::{Error, Result};

/// Density of Y = R + N, R uniform on the rings and N uniform on [−ε, ε].
///
/// Each ring contributes a trapezoid: linear ramps of width 2ε around both
/// ring edges and a flat top in between (a triangle-like shape when 2ε
/// exceeds the ring width). Overlapping ramps of the two rings simply add.
pub fn output_density(y: f64, epsilon: f64, rings: &Rings) -> f64 {
    let overlap = |(a, b): (f64, f64)| (b.min(y + epsilon) - a.max(y - epsilon)).max(0.0);
    (overlap(rings.inner) + overlap(rings.outer)) / (2.0 * epsilon * rings.total_length())
}

/// Differential entropy h(Y) in nats.
pub fn output_entropy(epsilon: f64, rings: &Rings) -> Result<f64> {
    validate(epsilon, rings)?;
    let mut knots: Vec<f64> = [rings.inner, rings.outer]
        .iter()
        .flat_map(|&(a, b)| [a - epsilon, a + epsilon, b - epsilon, b + epsilon])
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let integrand = |y: f64| {
        let p = output_density(y, epsilon, rings);
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    };
    // The density is linear between consecutive knots, so each piece is smooth.
    let mut total = 0.0;
    for w in knots.windows(2) {
        total += adaptive_simpson(&integrand, w[0], w[1], 1e-12, 40);
    }
    Ok(total)
}

/// I(X;Y) = I(R;Y) = h(Y) − h(N) in nats.
pub fn mi_oracle_bullseye(epsilon: f64, rings: &Rings) -> Result<f64> {
    Ok(output_entropy(epsilon, rings)? - (2.0 * epsilon).ln())
}

fn validate(epsilon: f64, rings: &Rings) -> Result<()> {
    rings.validate()?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "the oracle needs a positive, finite noise half-width, got {epsilon}"
        )));
    }
    Ok(())
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
