//! Standard normal distribution helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal c.d.f.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile. Returns `-inf`/`+inf` at 0 and 1.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        let x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
        // One Newton step against the accurate c.d.f.
        let d = pdf(x);
        if d > 0.0 {
            x - (cdf(x) - p) / d
        } else {
            x
        }
    }
}
