//! Finite-difference gradients and a BFGS minimizer with backtracking.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Central differences with h_j = cbrt(eps) * max(1, |v_j|).
pub fn finite_diff_gradient<F: Fn(&[f64]) -> f64>(f: F, v: &[f64]) -> Result<Vec<f64>> {
    let step = f64::EPSILON.cbrt();
    let mut x = v.to_vec();
    let mut g = Vec::with_capacity(v.len());
    for j in 0..v.len() {
        let h = step * v[j].abs().max(1.0);
        x[j] = v[j] + h;
        let up = f(&x);
        x[j] = v[j] - h;
        let dn = f(&x);
        x[j] = v[j];
        if !(up.is_finite() && dn.is_finite()) {
            return Err(Error::NonFinite("objective in gradient stencil"));
        }
        g.push((up - dn) / (2.0 * h));
    }
    Ok(g)
}

/// Fourth-order five-point stencil, used to cross-check the central rule.
pub fn finite_diff_gradient_4<F: Fn(&[f64]) -> f64>(f: F, v: &[f64]) -> Result<Vec<f64>> {
    let step = f64::EPSILON.powf(0.2);
    let mut x = v.to_vec();
    let mut g = Vec::with_capacity(v.len());
    for j in 0..v.len() {
        let h = step * v[j].abs().max(1.0);
        let mut at = |d: f64| {
            x[j] = v[j] + d;
            let r = f(&x);
            x[j] = v[j];
            r
        };
        let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
        if ![p2, p1, m1, m2].iter().all(|z| z.is_finite()) {
            return Err(Error::NonFinite("objective in gradient stencil"));
        }
        g.push((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h));
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsConfig {
    pub max_iters: usize,
    /// Stop when the sup-norm of the gradient falls below this.
    pub grad_tol: f64,
    /// Stop when the objective changes by less than this (relative) for
    /// three consecutive iterations.
    pub f_tol: f64,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig { max_iters: 500, grad_tol: 1e-6, f_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

fn sup(v: &DVector<f64>) -> f64 {
    v.amax()
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as
/// +infinity so the line search backs away from them.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], cfg: &BfgsConfig) -> Result<Minimum> {
    let n = x0.len();
    let eval = |x: &DVector<f64>| {
        let v = f(x.as_slice());
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let grad = |x: &DVector<f64>| finite_diff_gradient(&f, x.as_slice()).map(DVector::from_vec);

    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite("objective at starting point"));
    }
    let mut g = grad(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];
    let mut flat = 0;
    let mut iters = 0;
    let mut fresh = true;

    while iters < cfg.max_iters && sup(&g) > cfg.grad_tol {
        iters += 1;
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            d = -g.clone();
            slope = g.dot(&d);
            fresh = true;
        }
        // keep the first trial step bounded in the unconstrained space
        let dn = sup(&d);
        let mut t = if dn > 1.0 { 1.0 / dn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xt = &x + &d * t;
            let ft = eval(&xt);
            if ft <= fx + 1e-4 * t * slope {
                accepted = Some((xt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if fresh {
                break;
            }
            h = DMatrix::identity(n, n);
            fresh = true;
            continue;
        };
        let gn = match grad(&xn) {
            Ok(gn) => gn,
            Err(_) => break,
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * ((1.0 + rho * yhy) * rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        let change = (fx - fnew).abs() / fx.abs().max(1.0);
        x = xn;
        g = gn;
        fx = fnew;
        trace.push(fx);
        flat = if change < cfg.f_tol { flat + 1 } else { 0 };
        if flat >= 3 {
            break;
        }
    }
    let grad_norm = sup(&g);
    Ok(Minimum {
        x: x.iter().copied().collect(),
        f: fx,
        grad_norm,
        iterations: iters,
        converged: grad_norm <= cfg.grad_tol,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> f64 {
        (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2) + x[0] * x[1]
    }

    #[test]
    fn quadratic_gradient_exact() {
        let g = finite_diff_gradient(quad, &[0.3, -0.7]).unwrap();
        assert!((g[0] - (2.0 * (0.3 - 1.0) - 0.7)).abs() < 1e-8);
        assert!((g[1] - (6.0 * (-0.7 + 2.0) + 0.3)).abs() < 1e-8);
        let g4 = finite_diff_gradient_4(quad, &[0.3, -0.7]).unwrap();
        assert!((g[0] - g4[0]).abs() < 1e-8);
        assert!(finite_diff_gradient(|_| f64::NAN, &[0.0]).is_err());
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = bfgs(f, &[-1.2, 1.0], &BfgsConfig { max_iters: 2000, grad_tol: 1e-7, f_tol: 0.0 }).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn avoids_infinite_region() {
        let f = |x: &[f64]| if x[0] > 2.0 { f64::INFINITY } else { (x[0] - 1.9).powi(2) };
        let m = bfgs(f, &[0.0], &BfgsConfig::default()).unwrap();
        assert!((m.x[0] - 1.9).abs() < 1e-5);
    }
}
