//! Standard normal distribution helpers.
//!
//! `cdf` goes through `erfc` (libm, the musl/FreeBSD port, about 1 ulp) so
//! both tails keep full relative precision. `quantile` starts from Acklam's
//! rational approximation and finishes with Halley steps on `cdf`.

use libm::erfc;
use std::f64::consts::FRAC_1_SQRT_2;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - cdf(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = acklam(p);
    for _ in 0..2 {
        let e = if x < 0.0 { cdf(x) - p } else { (1.0 - p) - sf(x) };
        let u = e / pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `P(a <= Z < b)` for `a <= b`, evaluated on the side of zero that avoids
/// subtracting two numbers close to one.
pub fn interval(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        (sf(a) - sf(b)).max(0.0)
    } else {
        (cdf(b) - cdf(a)).max(0.0)
    }
}
