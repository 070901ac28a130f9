//! Migration matrices.
//!
//! All matrices are column-stochastic: entry `(k, l)` is the probability
//! of moving to state k from state l, so a distribution vector evolves as
//! `x_{t+1} = P x_t`. Index K-1 (0-based) is the default state. Its column
//! is either the rebirth row (`adjusted`) or a unit mass (absorbing).

use crate::error::{Error, Result};
use crate::normal;
use crate::params::{bound, ModelParams, ReducedParamsCL1};
use crate::quadrature::GaussHermite;
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub type Matrix = DMatrix<f64>;

/// How the factor integral in horizon-2 matrices is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integration {
    GaussHermite(usize),
    MonteCarlo { paths: usize, seed: u64 },
}

impl Default for Integration {
    fn default() -> Self {
        Integration::GaussHermite(40)
    }
}

/// Writes origin column `l` of an ordered-probit matrix with latent mean
/// `shift` and scale `scale`.
fn fill_column(m: &mut Matrix, c: &[f64], l: usize, shift: f64, scale: f64) {
    let k = m.nrows();
    let mut lo = f64::NEG_INFINITY;
    for dest in 0..k {
        let hi = (bound(c, k, dest + 1) - shift) / scale;
        m[(dest, l)] = normal::interval(lo, hi);
        lo = hi;
    }
}

fn fill_default(m: &mut Matrix, rebirth: &[f64], adjusted: bool) {
    let k = m.nrows();
    for dest in 0..k {
        m[(dest, k - 1)] = if adjusted {
            rebirth[dest]
        } else if dest == k - 1 {
            1.0
        } else {
            0.0
        };
    }
}

/// p_kl(f) = Phi((c_{k+1} - beta_l f - delta_l)/sigma_l) - Phi((c_k - ...)/sigma_l).
pub fn conditional_matrix(theta: &ModelParams, f: f64, adjusted: bool) -> Matrix {
    let k = theta.k_states;
    let mut m = Matrix::zeros(k, k);
    for l in 0..k - 1 {
        fill_column(&mut m, &theta.c, l, theta.delta[l] + theta.beta[l] * f, theta.sigma[l]);
    }
    fill_default(&mut m, &theta.rebirth_row, adjusted);
    m
}

/// Closed-form expectation of the conditional matrix over f ~ N(0,1).
pub fn expected_matrix(theta: &ModelParams, adjusted: bool) -> Matrix {
    let k = theta.k_states;
    let mut m = Matrix::zeros(k, k);
    for l in 0..k - 1 {
        fill_column(&mut m, &theta.c, l, theta.delta[l], theta.sigma[l].hypot(theta.beta[l]));
    }
    fill_default(&mut m, &theta.rebirth_row, adjusted);
    m
}

/// Expected matrix written in the reduced parameters.
pub fn expected_matrix_reduced(r: &ReducedParamsCL1, rebirth: &[f64], adjusted: bool) -> Matrix {
    let k = r.k_states;
    let c = r.full_c();
    let g = r.full_gamma();
    let mut m = Matrix::zeros(k, k);
    for l in 0..k - 1 {
        fill_column(&mut m, &c, l, r.delta[l], g[l]);
    }
    fill_default(&mut m, rebirth, adjusted);
    m
}

/// First factor of the horizon-2 integrand: the one-step matrix given the
/// previous factor value f (the current factor integrated out).
fn lagged_matrix(theta: &ModelParams, f: f64, adjusted: bool) -> Matrix {
    let k = theta.k_states;
    let rho = theta.rho;
    let mut m = Matrix::zeros(k, k);
    for l in 0..k - 1 {
        let b = theta.beta[l];
        let scale = (theta.sigma[l].powi(2) + b * b * (1.0 - rho * rho)).sqrt();
        fill_column(&mut m, &theta.c, l, theta.delta[l] + b * rho * f, scale);
    }
    fill_default(&mut m, &theta.rebirth_row, adjusted);
    m
}

fn h2_integrand(theta: &ModelParams, f: f64, adjusted: bool) -> Matrix {
    lagged_matrix(theta, f, adjusted) * conditional_matrix(theta, f, adjusted)
}

/// Expected two-step matrix E[P_t P_{t-1}], a one-dimensional integral over
/// the earlier factor value.
pub fn horizon2_matrix(theta: &ModelParams, method: Integration, adjusted: bool) -> Result<Matrix> {
    let k = theta.k_states;
    match method {
        Integration::GaussHermite(n) => {
            if n < 8 {
                return Err(Error::InvalidMethod(format!("need at least 8 quadrature nodes, got {n}")));
            }
            let gh = GaussHermite::new(n);
            Ok(horizon2_with_rule(theta, &gh, adjusted))
        }
        Integration::MonteCarlo { paths, seed } => {
            if paths == 0 {
                return Err(Error::InvalidMethod("need at least one path".into()));
            }
            let parts: Vec<Matrix> = (0..paths)
                .into_par_iter()
                .map(|s| {
                    let f: f64 = StandardNormal.sample(&mut rng::stream(seed, &[rng::PATH_STREAM, s as u64]));
                    h2_integrand(theta, f, adjusted)
                })
                .collect();
            let mut acc = Matrix::zeros(k, k);
            for p in &parts {
                acc += p;
            }
            Ok(acc / paths as f64)
        }
    }
}

/// Horizon-2 matrix for a prebuilt quadrature rule (reused inside
/// optimizers).
pub fn horizon2_with_rule(theta: &ModelParams, gh: &GaussHermite, adjusted: bool) -> Matrix {
    let k = theta.k_states;
    let mut acc = Matrix::zeros(k, k);
    for (&x, &w) in gh.nodes.iter().zip(&gh.weights) {
        acc += h2_integrand(theta, x, adjusted) * w;
    }
    acc
}

/// Stationary AR(1) factor path of length `h` for antithetic pair `pair`.
fn factor_path(rho: f64, h: usize, seed: u64, pair: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[rng::PATH_STREAM, pair]);
    let innov = (1.0 - rho * rho).sqrt();
    let mut f: f64 = StandardNormal.sample(&mut r);
    let mut out = Vec::with_capacity(h);
    out.push(f);
    for _ in 1..h {
        let e: f64 = StandardNormal.sample(&mut r);
        f = rho * f + innov * e;
        out.push(f);
    }
    out
}

fn pairs_for(paths: usize) -> usize {
    paths.div_ceil(2).max(1)
}

/// Monte-Carlo E[P_{t+h-1} ... P_t] over stationary factor paths.
///
/// Paths come in antithetic pairs (f, -f); `paths` is rounded up to an even
/// number. Pair i draws from its own substream so the result does not
/// depend on the thread count.
pub fn horizon_h_matrix(theta: &ModelParams, h: usize, paths: usize, seed: u64, adjusted: bool) -> Matrix {
    let k = theta.k_states;
    if h == 0 {
        return Matrix::identity(k, k);
    }
    let pairs = pairs_for(paths);
    let parts: Vec<Matrix> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let f = factor_path(theta.rho, h, seed, i as u64);
            let mut sum = Matrix::zeros(k, k);
            for sign in [1.0, -1.0] {
                let mut prod = Matrix::identity(k, k);
                for &ft in &f {
                    prod = conditional_matrix(theta, sign * ft, adjusted) * prod;
                }
                sum += prod;
            }
            sum
        })
        .collect();
    let mut acc = Matrix::zeros(k, k);
    for p in &parts {
        acc += p;
    }
    acc / (2 * pairs) as f64
}

/// Distribution at each requested horizon for a firm starting in `origin`,
/// using the same paths as [`horizon_h_matrix`]. Cheaper than full matrix
/// products when only one column is needed.
pub fn horizon_h_column(
    theta: &ModelParams,
    origin: usize,
    horizons: &[usize],
    paths: usize,
    seed: u64,
    adjusted: bool,
) -> Vec<Vec<f64>> {
    let k = theta.k_states;
    let hmax = horizons.iter().copied().max().unwrap_or(0);
    let pairs = pairs_for(paths);
    let parts: Vec<Vec<DVector<f64>>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let f = factor_path(theta.rho, hmax, seed, i as u64);
            let mut out = vec![DVector::zeros(k); horizons.len()];
            for sign in [1.0, -1.0] {
                let mut v = DVector::zeros(k);
                v[origin] = 1.0;
                for (t, &ft) in f.iter().enumerate() {
                    v = conditional_matrix(theta, sign * ft, adjusted) * v;
                    for (j, &h) in horizons.iter().enumerate() {
                        if h == t + 1 {
                            out[j] += &v;
                        }
                    }
                }
                for (j, &h) in horizons.iter().enumerate() {
                    if h == 0 {
                        out[j][origin] += 1.0;
                    }
                }
            }
            out
        })
        .collect();
    let mut acc = vec![DVector::zeros(k); horizons.len()];
    for p in &parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc.into_iter().map(|v| (v / (2 * pairs) as f64).iter().copied().collect()).collect()
}

/// Invariant distribution pi = P pi with sum(pi) = 1.
pub fn stationary_distribution(p: &Matrix) -> Result<Vec<f64>> {
    let k = p.nrows();
    let mut a = Matrix::identity(k, k) - p;
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let lu = a.lu();
    let x = lu.solve(&b).ok_or(Error::NotIrreducible)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotIrreducible);
    }
    let resid = (p * &x - &x).amax();
    if resid > 1e-9 || x.iter().any(|v| *v < -1e-12) {
        return Err(Error::NotIrreducible);
    }
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_params, Design};
    use proptest::prelude::*;

    fn max_abs(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).amax()
    }

    fn col_sums_ok(m: &Matrix, tol: f64) -> bool {
        (0..m.ncols()).all(|l| (m.column(l).sum() - 1.0).abs() <= tol)
    }

    #[test]
    fn scalar_entry() {
        let p = design_params(Design::Three, 0.4).unwrap();
        let m = conditional_matrix(&p, 0.0, true);
        let expect = normal::cdf(0.5 * 1.84f64.sqrt());
        assert!((m[(0, 0)] - expect).abs() < 1e-15);
        assert!((m[(0, 0)] - 0.751_188_013_412_196).abs() < 1e-14);
    }

    #[test]
    fn expected_entries_and_rebirth() {
        let p = design_params(Design::Three, 0.4).unwrap();
        let m = expected_matrix(&p, true);
        assert!((m[(0, 0)] - 0.6842).abs() < 5e-5);
        assert!((m[(1, 0)] - 0.2882).abs() < 5e-5);
        let last: Vec<f64> = m.column(7).iter().copied().collect();
        assert_eq!(last, vec![0.5, 0.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let abs = expected_matrix(&p, false);
        assert_eq!(abs[(7, 7)], 1.0);
    }

    #[test]
    fn closed_form_is_an_integral() {
        let gh = GaussHermite::new(64);
        for d in [Design::One, Design::Two, Design::Three] {
            let p = design_params(d, 0.4).unwrap();
            let mut acc = Matrix::zeros(8, 8);
            for (&x, &w) in gh.nodes.iter().zip(&gh.weights) {
                acc += conditional_matrix(&p, x, true) * w;
            }
            assert!(max_abs(&acc, &expected_matrix(&p, true)) < 1e-10);
        }
    }

    #[test]
    fn no_loadings_no_factor() {
        let mut p = design_params(Design::Three, 0.4).unwrap();
        p.beta = vec![0.0; 7];
        let e = expected_matrix(&p, true);
        assert_eq!(e, conditional_matrix(&p, 1.3, true));
        let h2 = horizon2_matrix(&p, Integration::GaussHermite(64), true).unwrap();
        assert!(max_abs(&h2, &(&e * &e)) < 1e-12);
    }

    #[test]
    fn horizon2_value_and_square() {
        let p = design_params(Design::Three, 0.4).unwrap();
        let h2 = horizon2_matrix(&p, Integration::GaussHermite(64), true).unwrap();
        let e = expected_matrix(&p, true);
        let sq = &e * &e;
        assert!((h2[(0, 0)] - 0.5302).abs() < 1e-4, "{}", h2[(0, 0)]);
        assert!((sq[(0, 0)] - 0.5189).abs() < 1e-4, "{}", sq[(0, 0)]);
        assert!(col_sums_ok(&h2, 1e-12));
    }

    #[test]
    fn quadrature_converges() {
        for d in [Design::One, Design::Two, Design::Three] {
            let p = design_params(d, 0.7).unwrap();
            let a = horizon2_matrix(&p, Integration::GaussHermite(32), true).unwrap();
            let b = horizon2_matrix(&p, Integration::GaussHermite(64), true).unwrap();
            assert!(max_abs(&a, &b) <= 1e-8);
        }
    }

    #[test]
    fn monte_carlo_horizon2_close() {
        let p = design_params(Design::Two, 0.4).unwrap();
        let gh = horizon2_matrix(&p, Integration::GaussHermite(64), true).unwrap();
        let mc = horizon2_matrix(&p, Integration::MonteCarlo { paths: 20_000, seed: 11 }, true).unwrap();
        assert!(max_abs(&gh, &mc) < 0.01);
        assert!(horizon2_matrix(&p, Integration::GaussHermite(4), true).is_err());
    }

    #[test]
    fn horizon_h_consistency() {
        let p = design_params(Design::Two, 0.0).unwrap();
        let e = expected_matrix(&p, true);
        let h1 = horizon_h_matrix(&p, 1, 4000, 5, true);
        assert!(max_abs(&h1, &e) < 0.01);
        let h2 = horizon_h_matrix(&p, 2, 50_000, 5, true);
        let q = horizon2_matrix(&p, Integration::GaussHermite(64), true).unwrap();
        assert!(max_abs(&h2, &q) < 0.005);
        let col = horizon_h_column(&p, 2, &[1, 2], 50_000, 5, true);
        for k in 0..8 {
            assert!((col[1][k] - h2[(k, 2)]).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_examples() {
        let m = Matrix::from_row_slice(2, 2, &[0.9, 0.5, 0.1, 0.5]);
        let pi = stationary_distribution(&m).unwrap();
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-14);
        assert!(stationary_distribution(&Matrix::identity(3, 3)).is_err());
        let p = design_params(Design::Three, 0.4).unwrap();
        let e = expected_matrix(&p, true);
        let pi = stationary_distribution(&e).unwrap();
        let v = DVector::from_vec(pi.clone());
        assert!((&e * &v - &v).amax() < 1e-10);
        assert!((pi[0] - 0.1451).abs() < 5e-5 && (pi[7] - 0.0294).abs() < 5e-5);
    }

    proptest! {
        #[test]
        fn conditional_columns_stochastic(f in -6.0f64..6.0, rho in -0.9f64..0.9, adj in any::<bool>()) {
            let p = design_params(Design::Three, rho).unwrap();
            let m = conditional_matrix(&p, f, adj);
            prop_assert!(col_sums_ok(&m, 1e-12));
            prop_assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn zero_loadings_ignore_rho(rho in -0.9f64..0.9) {
            let mut p = design_params(Design::One, 0.0).unwrap();
            p.beta = vec![0.0; 7];
            let base = horizon2_matrix(&p, Integration::GaussHermite(16), true).unwrap();
            p.rho = rho;
            let moved = horizon2_matrix(&p, Integration::GaussHermite(16), true).unwrap();
            prop_assert_eq!(base, moved);
        }
    }
}
