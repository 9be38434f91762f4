use std::f64::consts::PI;

use crate::error::{Error, Result};

const SHIFT_THRESHOLD: f64 = 10.0;

/// Digamma function `d/dx ln Γ(x)` for `x > 0`.
///
/// Shifts the argument above 10 with `ψ(x) = ψ(x + 1) - 1/x`, then sums the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain { function: "digamma", x });
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < SHIFT_THRESHOLD {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k x^2k), k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 * inv - series)
}

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain { function: "log_gamma", x });
    }
    let mut x = x;
    let mut log_prod = 0.0;
    while x < SHIFT_THRESHOLD {
        log_prod += x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    Ok((x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series - log_prod)
}
