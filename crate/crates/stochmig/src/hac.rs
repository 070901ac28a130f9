//! Sandwich covariance with a quadratic-spectral HAC estimator.
//!
//! With g_kl the gradient of log p_kl in natural coordinates, n firms and
//! D dates:
//!
//! * J = sum_kl n_kl / (n D) g_kl g_kl'
//! * s_t = sum_kl (n_kl,t / n - mean_t(n_kl,t / n)) g_kl
//! * I_h = (1/D) sum_t s_t s_{t+h}'
//! * Sigma = J^-1 (I_0 + sum_h k(h/B)(I_h + I_h')) J^-1, se = sqrt(diag/D)
//!
//! CL(1,2) stacks both components on the one-step date grid.

use crate::error::{Error, Result};
use crate::estimator::{EstimationResult, FitMode};
use crate::kernel::{expected_matrix, expected_matrix_reduced, horizon2_with_rule, Matrix};
use crate::likelihood::TransitionCounts;
use crate::params::{ModelParams, ReducedParamsCL1};
use crate::quadrature::GaussHermite;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Quadratic-spectral kernel, k(0) = 1.
pub fn qs_kernel(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let z = 6.0 * PI * x / 5.0;
    25.0 / (12.0 * PI * PI * x * x) * (z.sin() / z - z.cos())
}

/// Default bandwidth 4 (T/100)^(2/9).
pub fn bandwidth(t: usize) -> f64 {
    4.0 * (t as f64 / 100.0).powf(2.0 / 9.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HacConfig {
    /// None uses [`bandwidth`] on the number of dates.
    pub bandwidth: Option<f64>,
    /// None sums every available lag.
    pub max_lag: Option<usize>,
    pub quad_nodes: usize,
}

impl Default for HacConfig {
    fn default() -> Self {
        HacConfig { bandwidth: None, max_lag: None, quad_nodes: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub names: Vec<String>,
    pub sigma: DMatrix<f64>,
    pub j_hat: DMatrix<f64>,
    /// I_0, I_1, ... up to the lag limit.
    pub i_hats: Vec<DMatrix<f64>>,
    pub se: Vec<f64>,
    pub n_dates: usize,
    pub bandwidth: f64,
    /// Largest lag kept in the kernel sum.
    pub lags_used: usize,
    /// Lag sum was cut short to keep the diagonal nonnegative.
    pub truncated: bool,
    /// J was singular and a pseudo-inverse was used.
    pub pseudo_inverse: bool,
}

type ProbFn<'a> = Box<dyn Fn(&[f64]) -> Result<Matrix> + 'a>;
type CellGrad = ((usize, usize), DVector<f64>);

/// One block of the composite objective: per-date counts (aligned so the
/// last entry is the last panel date) and the model matrix as a function of
/// the natural parameter vector.
struct Component<'a> {
    per_date: &'a [Matrix],
    total: &'a Matrix,
    probs: ProbFn<'a>,
}

struct Model<'a> {
    theta: Vec<f64>,
    components: Vec<Component<'a>>,
}

fn model<'a>(counts: &'a TransitionCounts, est: &EstimationResult, nodes: usize) -> Result<Model<'a>> {
    let k = counts.k_states;
    let rebirth = est.rebirth_row.clone();
    let one = |rebirth: Vec<f64>| -> ProbFn<'a> {
        Box::new(move |v: &[f64]| Ok(expected_matrix_reduced(&ReducedParamsCL1::from_natural(v, k)?, &rebirth, true)))
    };
    let full_one = |rebirth: Vec<f64>| -> ProbFn<'a> {
        Box::new(move |v: &[f64]| Ok(expected_matrix(&ModelParams::from_natural_cl2(v, k, &rebirth)?, true)))
    };
    let two = |rebirth: Vec<f64>| -> ProbFn<'a> {
        let gh = GaussHermite::new(nodes.max(8));
        Box::new(move |v: &[f64]| Ok(horizon2_with_rule(&ModelParams::from_natural_cl2(v, k, &rebirth)?, &gh, true)))
    };
    let c1 = |probs| Component { per_date: &counts.n1_t, total: &counts.n1, probs };
    let c2 = |probs| Component { per_date: &counts.n2_t, total: &counts.n2, probs };
    let components = match est.mode {
        FitMode::Cl1 => vec![c1(one(rebirth))],
        FitMode::Cl2 | FitMode::TwoStep => vec![c2(two(rebirth))],
        FitMode::Cl12 => vec![c1(full_one(rebirth.clone())), c2(two(rebirth))],
    };
    Ok(Model { theta: est.estimates.clone(), components })
}

/// d log p_kl / d theta_j for the observed cells, by central differences
/// (one-sided when a side of the stencil leaves the parameter space).
fn cell_gradients(comp: &Component, theta: &[f64]) -> Result<Vec<CellGrad>> {
    let base = (comp.probs)(theta)?;
    let cells: Vec<(usize, usize)> = (0..base.ncols())
        .flat_map(|l| (0..base.nrows()).map(move |k| (k, l)))
        .filter(|&(k, l)| comp.total[(k, l)] > 0.0 && base[(k, l)] > 0.0)
        .collect();
    let d = theta.len();
    let mut grads = vec![DVector::zeros(d); cells.len()];
    let step = f64::EPSILON.cbrt();
    let mut x = theta.to_vec();
    for j in 0..d {
        let h = step * theta[j].abs().max(1.0);
        x[j] = theta[j] + h;
        let up = (comp.probs)(&x).ok();
        x[j] = theta[j] - h;
        let dn = (comp.probs)(&x).ok();
        x[j] = theta[j];
        let (a, b, w) = match (&up, &dn) {
            (Some(u), Some(v)) => (u, v, 2.0 * h),
            (Some(u), None) => (u, &base, h),
            (None, Some(v)) => (&base, v, h),
            (None, None) => return Err(Error::NonFinite("probabilities around the estimate")),
        };
        for (c, &(k, l)) in cells.iter().enumerate() {
            grads[c][j] = (a[(k, l)].ln() - b[(k, l)].ln()) / w;
        }
    }
    Ok(cells.into_iter().zip(grads).collect())
}

fn invert(j: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let d = j.nrows();
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin > smax * 1e-12 {
        if let Some(inv) = j.clone().try_inverse() {
            return (inv, false);
        }
    }
    let pinv = svd.pseudo_inverse(smax * 1e-12 * d as f64).unwrap_or_else(|_| DMatrix::zeros(d, d));
    (pinv, true)
}

pub fn estimate(counts: &TransitionCounts, est: &EstimationResult, cfg: &HacConfig) -> Result<CovarianceEstimate> {
    let m = model(counts, est, cfg.quad_nodes)?;
    let n_dates = counts.n1_t.len();
    let dates = match est.mode {
        FitMode::Cl1 | FitMode::Cl12 => n_dates,
        _ => counts.n2_t.len(),
    };
    if dates + 1 < 5 {
        return Err(Error::TooShort { need: 5, got: dates + 1 });
    }
    let d = m.theta.len();
    let n = counts.n_firms as f64;
    let df = dates as f64;
    let mut j_hat = DMatrix::zeros(d, d);
    let mut scores = vec![DVector::<f64>::zeros(d); dates];
    for comp in &m.components {
        let offset = dates - comp.per_date.len();
        for ((k, l), g) in cell_gradients(comp, &m.theta)? {
            j_hat += &g * g.transpose() * (comp.total[(k, l)] / (n * df));
            let mean = comp.total[(k, l)] / (n * comp.per_date.len() as f64);
            for (t, nt) in comp.per_date.iter().enumerate() {
                scores[t + offset].axpy(nt[(k, l)] / n - mean, &g, 1.0);
            }
        }
    }
    let max_lag = cfg.max_lag.unwrap_or(dates - 1).min(dates - 1);
    let i_hats: Vec<DMatrix<f64>> = (0..=max_lag)
        .map(|h| {
            let mut acc = DMatrix::zeros(d, d);
            for t in 0..dates - h {
                acc += &scores[t] * scores[t + h].transpose();
            }
            acc / df
        })
        .collect();
    let bw = cfg.bandwidth.unwrap_or_else(|| bandwidth(dates));
    let (jinv, pseudo_inverse) = invert(&j_hat);
    let sandwich = |lags: usize| {
        let mut mid = i_hats[0].clone();
        for (h, ih) in i_hats.iter().enumerate().take(lags + 1).skip(1) {
            mid += (ih + ih.transpose()) * qs_kernel(h as f64 / bw);
        }
        let s = &jinv * mid * &jinv;
        (&s + s.transpose()) * 0.5
    };
    let mut lags_used = max_lag;
    let mut sigma = sandwich(max_lag);
    let mut truncated = false;
    while sigma.diagonal().iter().any(|v| *v < 0.0) && lags_used > 0 {
        lags_used -= 1;
        sigma = sandwich(lags_used);
        truncated = true;
    }
    let se = sigma.diagonal().iter().map(|v| (v.max(0.0) / df).sqrt()).collect();
    Ok(CovarianceEstimate {
        names: est.names.clone(),
        sigma,
        j_hat,
        i_hats,
        se,
        n_dates: dates,
        bandwidth: bw,
        lags_used,
        truncated,
        pseudo_inverse,
    })
}

/// Hessian form of J, -(1/(n D)) d^2 CL / d theta^2, for diagnostics only.
pub fn hessian_j(counts: &TransitionCounts, est: &EstimationResult, nodes: usize) -> Result<DMatrix<f64>> {
    let m = model(counts, est, nodes)?;
    let dates = match est.mode {
        FitMode::Cl1 | FitMode::Cl12 => counts.n1_t.len(),
        _ => counts.n2_t.len(),
    };
    let scale = counts.n_firms as f64 * dates as f64;
    let obj = |v: &[f64]| -> f64 {
        m.components
            .iter()
            .map(|c| match (c.probs)(v) {
                Ok(p) => crate::likelihood::loglik_counts(c.total, &p).value,
                Err(_) => f64::NAN,
            })
            .sum::<f64>()
            / scale
    };
    let d = m.theta.len();
    let step = f64::EPSILON.powf(0.25);
    let mut hmat = DMatrix::zeros(d, d);
    let mut x = m.theta.clone();
    for a in 0..d {
        for b in a..d {
            let ha = step * m.theta[a].abs().max(1.0);
            let hb = step * m.theta[b].abs().max(1.0);
            let mut at = |da: f64, db: f64| {
                x[a] += da;
                x[b] += db;
                let r = obj(&x);
                x.copy_from_slice(&m.theta);
                r
            };
            let v = (at(ha, hb) - at(ha, -hb) - at(-ha, hb) + at(-ha, -hb)) / (4.0 * ha * hb);
            hmat[(a, b)] = -v;
            hmat[(b, a)] = -v;
        }
    }
    Ok(hmat)
}

/// (estimate - null) / se, None where se is zero or not finite.
pub fn t_statistics(estimates: &[f64], se: &[f64], null: &[f64]) -> Result<Vec<Option<f64>>> {
    if estimates.len() != se.len() || estimates.len() != null.len() {
        return Err(Error::Dimension { expected: estimates.len(), got: se.len().min(null.len()) });
    }
    Ok(estimates
        .iter()
        .zip(se)
        .zip(null)
        .map(|((e, s), n)| (*s > 0.0 && s.is_finite()).then(|| (e - n) / s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_params, Design};
    use crate::estimator::{fit_cl1, OptimizerConfig};
    use crate::likelihood::{build_counts, TwoStepMode};
    use crate::simulate::{simulate_panel, InitialRating};

    #[test]
    fn kernel_values() {
        assert_eq!(qs_kernel(0.0), 1.0);
        assert!((qs_kernel(1.0) - 0.137_860_581_674_593_6).abs() < 1e-15);
        assert_eq!(qs_kernel(0.7), qs_kernel(-0.7));
        assert!(qs_kernel(1e-4) > 0.999_999);
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(bandwidth(100), 4.0);
        assert!(bandwidth(240) > bandwidth(120));
    }

    #[test]
    fn t_stats() {
        let t = t_statistics(&[1.0, 2.0], &[0.5, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(t, vec![Some(0.0), None]);
        let a = t_statistics(&[3.0], &[1.0], &[1.0]).unwrap()[0].unwrap();
        let b = t_statistics(&[3.0], &[2.0], &[1.0]).unwrap()[0].unwrap();
        assert_eq!(a, 2.0 * b);
    }

    fn setup() -> (TransitionCounts, EstimationResult) {
        let p = design_params(Design::One, 0.0).unwrap();
        let pn = simulate_panel(&p, 300, 40, &InitialRating::StationaryNoDefault, 12, false).unwrap();
        let c = build_counts(&pn, TwoStepMode::Direct).unwrap();
        let e = fit_cl1(&c, &OptimizerConfig::default()).unwrap();
        (c, e)
    }

    #[test]
    fn sandwich_shapes_and_homogeneity() {
        let (c, e) = setup();
        let cov = estimate(&c, &e, &HacConfig::default()).unwrap();
        assert_eq!(cov.se.len(), 19);
        assert!((&cov.sigma - cov.sigma.transpose()).amax() < 1e-10);
        assert!(cov.sigma.diagonal().iter().all(|v| *v >= 0.0));
        let eig = cov.j_hat.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() > -1e-12);
        let mut doubled = c.scaled(2.0);
        doubled.n_firms *= 2;
        let cov2 = estimate(&doubled, &e, &HacConfig::default()).unwrap();
        assert!((&cov.j_hat - &cov2.j_hat).amax() < 1e-12);
    }

    #[test]
    fn constant_counts_have_no_lag_variance() {
        let (mut c, e) = setup();
        let avg = &c.n1 / c.n1_t.len() as f64;
        c.n1_t.iter_mut().for_each(|m| *m = avg.clone());
        let cov = estimate(&c, &e, &HacConfig::default()).unwrap();
        assert!(cov.i_hats.iter().all(|m| m.amax() < 1e-20));
    }

    #[test]
    fn toy_binary_information() {
        // K = 3 with only state 1 observed as origin: p_11 = Phi(delta-free)
        let pn = crate::simulate::RatingPanel::from_ratings(3, 4, 6, vec![
            0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1,
        ])
        .unwrap();
        let c = build_counts(&pn, TwoStepMode::Direct).unwrap();
        let e = fit_cl1(&c, &OptimizerConfig::default()).unwrap();
        let cov = estimate(&c, &e, &HacConfig::default()).unwrap();
        // delta_1 enters p_11 = Phi(-delta_1) and p_21 = 1 - Phi(-delta_1)
        let d1 = e.estimates[1];
        let p = crate::normal::cdf(-d1);
        let phi = crate::normal::pdf(d1);
        let n11 = c.n1[(0, 0)];
        let n21 = c.n1[(1, 0)];
        let g11 = -phi / p;
        let g21 = phi / (1.0 - p);
        let expect = (n11 * g11 * g11 + n21 * g21 * g21) / (4.0 * 5.0);
        assert!((cov.j_hat[(1, 1)] - expect).abs() < 1e-8 * expect.max(1.0), "{} {}", cov.j_hat[(1, 1)], expect);
    }
}
