use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Digamma function ψ(x) for x > 0.
///
/// Shifts the argument upward with ψ(x) = ψ(x + 1) − 1/x until x ≥ 6, then
/// applies the asymptotic expansion in 1/x².
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "digamma requires a finite positive argument, got {x}"
        )));
    }
    let mut x = x;
    let mut acc = T::zero();
    let six = T::lit(6.0);
    while x < six {
        acc -= x.recip();
        x += T::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2j} / (2j)
    let series = inv2
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 120.0)
                    - inv2
                        * (T::lit(1.0 / 252.0)
                            - inv2
                                * (T::lit(1.0 / 240.0)
                                    - inv2
                                        * (T::lit(1.0 / 132.0)
                                            - inv2
                                                * (T::lit(691.0 / 32760.0)
                                                    - inv2 * T::lit(1.0 / 12.0)))))));
    Ok(acc + x.ln() - T::lit(0.5) * inv - series)
}

/// ψ(1), ψ(2), …, ψ(len) tabulated by the integer recurrence.
pub(crate) fn digamma_table(len: usize) -> Vec<f64> {
    let mut table = Vec::with_capacity(len + 1);
    table.push(f64::NAN);
    let mut v = -EULER_GAMMA;
    for m in 1..=len {
        table.push(v);
        v += 1.0 / m as f64;
    }
    table
}
