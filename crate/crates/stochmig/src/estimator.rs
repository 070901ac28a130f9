//! Maximum composite likelihood estimation.
//!
//! Every fit runs BFGS on unconstrained coordinates and maximizes the
//! objective divided by its total count, so tolerances do not depend on
//! the panel size. The default-state column uses the empirical rebirth
//! shares, which add a parameter-free constant.

use crate::error::{Error, Result};
use crate::kernel::{expected_matrix, horizon2_with_rule};
use crate::likelihood::{cl1, cl2_with_rule, loglik_counts, LogLik, TransitionCounts};
use crate::normal;
use crate::optim::{bfgs, BfgsConfig, Minimum};
use crate::params::{default_rebirth, param_names, Mode, ModelParams, ReducedParamsCL1, UnconstrainedVector};
use crate::quadrature::GaussHermite;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    Cl1,
    Cl2,
    Cl12,
    TwoStep,
}

impl FitMode {
    pub fn param_mode(self) -> Mode {
        match self {
            FitMode::Cl1 => Mode::Cl1,
            _ => Mode::Cl2,
        }
    }

    pub fn parse(s: &str) -> Result<FitMode> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cl1" => Ok(FitMode::Cl1),
            "cl2" => Ok(FitMode::Cl2),
            "cl12" => Ok(FitMode::Cl12),
            "two-step" | "twostep" => Ok(FitMode::TwoStep),
            other => Err(Error::Config(format!("unknown estimator mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    /// Extra starts drawn around the initial point.
    pub restarts: usize,
    pub restart_scale: f64,
    pub seed: u64,
    /// Gauss-Hermite nodes for the two-step matrix inside the objective.
    pub quad_nodes: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { max_iters: 500, grad_tol: 1e-6, f_tol: 1e-13, restarts: 0, restart_scale: 0.2, seed: 0, quad_nodes: 40 }
    }
}

impl OptimizerConfig {
    fn bfgs(&self) -> BfgsConfig {
        BfgsConfig { max_iters: self.max_iters, grad_tol: self.grad_tol, f_tol: self.f_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub mode: FitMode,
    /// CL(1) estimates, or the step-one estimates of a two-step fit.
    pub reduced: Option<ReducedParamsCL1>,
    /// Full estimates under the CL(2) normalization.
    pub params: Option<ModelParams>,
    pub names: Vec<String>,
    /// Natural coordinates matching `names`.
    pub estimates: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub zero_cells: usize,
    /// 1-based origin states without observations, held at their start values.
    pub unidentified: Vec<usize>,
    pub rebirth_row: Vec<f64>,
    pub restarts_run: usize,
}

pub fn rebirth_for(counts: &TransitionCounts) -> Vec<f64> {
    counts.rebirth_estimate().unwrap_or_else(|| default_rebirth(counts.k_states))
}

/// Probit inversion of the one-step frequencies with every gamma at one.
///
/// Solves z_{kl} = c_{k+1} - delta_l by alternating averages over the cells
/// whose cumulative frequency is away from 0 and 1, then repairs ordering.
pub fn moment_init(counts: &TransitionCounts) -> ReducedParamsCL1 {
    let k = counts.k_states;
    let n = &counts.n1;
    // z[l][j] for boundary j = 1..K-1 (c_{j+1})
    let mut z: Vec<Vec<Option<f64>>> = vec![vec![None; k]; k - 1];
    for (l, zl) in z.iter_mut().enumerate() {
        let tot = n.column(l).sum();
        if tot <= 0.0 {
            continue;
        }
        let mut cum = 0.0;
        for j in 1..k {
            cum += n[(j - 1, l)];
            let f = cum / tot;
            if (0.005..=0.995).contains(&f) {
                zl[j] = Some(normal::quantile(f));
            }
        }
    }
    let mut c: Vec<f64> = (0..k).map(|j| 1.5 * (j as f64 - 1.0)).collect();
    c[1] = 0.0;
    let mut delta: Vec<f64> = (0..k - 1).map(|l| 1.5 * l as f64 - 0.5).collect();
    for _ in 0..50 {
        for (l, zl) in z.iter().enumerate() {
            let v: Vec<f64> = (1..k).filter_map(|j| zl[j].map(|zz| c[j] - zz)).collect();
            if !v.is_empty() {
                delta[l] = v.iter().sum::<f64>() / v.len() as f64;
            }
        }
        for j in 2..k {
            let v: Vec<f64> = (0..k - 1).filter_map(|l| z[l][j].map(|zz| zz + delta[l])).collect();
            if !v.is_empty() {
                c[j] = v.iter().sum::<f64>() / v.len() as f64;
            }
        }
    }
    for j in 2..k {
        if !(c[j] > c[j - 1] + 0.05) {
            c[j] = c[j - 1] + 0.05_f64.max(c[j - 1] - c[j - 2]);
        }
    }
    ReducedParamsCL1 { k_states: k, c: c[2..].to_vec(), delta, gamma: vec![1.0; k - 2] }
}

/// Origin states (0-based, non-default) that were never observed.
fn empty_origins(counts: &TransitionCounts) -> Vec<usize> {
    let tot = counts.origin_totals();
    (0..counts.k_states - 1).filter(|&l| tot[l] <= 0.0).collect()
}

/// Runs BFGS from `x0` and from `cfg.restarts` perturbations of the free
/// coordinates; returns the best minimum and how many starts ran.
fn multistart<F>(f: F, x0: &[f64], free: &[usize], cfg: &OptimizerConfig) -> Result<(Minimum, Vec<f64>)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let embed = |y: &[f64]| {
        let mut x = x0.to_vec();
        for (i, &j) in free.iter().enumerate() {
            x[j] = y[i];
        }
        x
    };
    let sub = |y: &[f64]| f(&embed(y));
    let y0: Vec<f64> = free.iter().map(|&j| x0[j]).collect();
    let starts: Vec<Vec<f64>> = std::iter::once(y0.clone())
        .chain((0..cfg.restarts).map(|r| {
            let mut g = rng::stream(cfg.seed, &[rng::RESTART_STREAM, r as u64]);
            y0.iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut g);
                    v + cfg.restart_scale * e
                })
                .collect()
        }))
        .collect();
    let results: Vec<Result<Minimum>> = starts.par_iter().map(|s| bfgs(sub, s, &cfg.bfgs())).collect();
    let mut best: Option<Minimum> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(m) => {
                if best.as_ref().is_none_or(|b| m.f < b.f) {
                    best = Some(m);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(m) => {
            let full = embed(&m.x);
            Ok((m, full))
        }
        None => Err(first_err.unwrap_or(Error::NonFinite("objective"))),
    }
}

fn cl1_free(k: usize, empty: &[usize]) -> Vec<usize> {
    let mut skip = Vec::new();
    for &l in empty {
        skip.push((k - 2) + l);
        if l >= 1 {
            skip.push((2 * k - 3) + (l - 1));
        }
    }
    (0..3 * k - 5).filter(|j| !skip.contains(j)).collect()
}

fn cl2_free(k: usize, empty: &[usize]) -> Vec<usize> {
    let mut skip = Vec::new();
    for &l in empty {
        skip.push((k - 2) + l);
        if l >= 1 {
            skip.push((2 * k - 3) + (l - 1));
        }
        skip.push((3 * k - 5) + l);
    }
    (0..4 * k - 5).filter(|j| !skip.contains(j)).collect()
}

fn check_counts(counts: &TransitionCounts, two_step: bool) -> Result<()> {
    if counts.n1.sum() <= 0.0 {
        return Err(Error::InvalidParams("no one-step transitions".into()));
    }
    if two_step && counts.n2.sum() <= 0.0 {
        return Err(Error::TooShort { need: 3, got: counts.n1_t.len() + 1 });
    }
    Ok(())
}

pub fn fit_cl1(counts: &TransitionCounts, cfg: &OptimizerConfig) -> Result<EstimationResult> {
    check_counts(counts, false)?;
    let k = counts.k_states;
    let rebirth = rebirth_for(counts);
    let total = counts.n1.sum();
    let empty = empty_origins(counts);
    let x0 = moment_init(counts).to_unconstrained().0;
    let obj = |v: &[f64]| match ReducedParamsCL1::from_unconstrained(&UnconstrainedVector(v.to_vec()), k) {
        Ok(r) => -cl1(counts, &r, &rebirth).value / total,
        Err(_) => f64::INFINITY,
    };
    let (m, x) = multistart(obj, &x0, &cl1_free(k, &empty), cfg)?;
    let r = ReducedParamsCL1::from_unconstrained(&UnconstrainedVector(x), k)?;
    let ll = cl1(counts, &r, &rebirth);
    Ok(EstimationResult {
        mode: FitMode::Cl1,
        names: param_names(Mode::Cl1, k),
        estimates: r.to_natural(),
        reduced: Some(r),
        params: None,
        objective: ll.value,
        grad_norm: m.grad_norm,
        iterations: m.iterations,
        converged: m.converged,
        zero_cells: ll.zero_cells,
        unidentified: empty.iter().map(|l| l + 1).collect(),
        rebirth_row: rebirth,
        restarts_run: cfg.restarts,
    })
}

/// Starting point for CL(2)-type fits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cl2Init {
    Moment,
    WarmStart(ReducedParamsCL1),
}

/// Splits each gamma evenly between loading and idiosyncratic scale, with
/// rho = 0 (where the CL(2) and CL(1) normalizations coincide).
fn split_start(r: &ReducedParamsCL1, rebirth: &[f64]) -> ModelParams {
    let angles = vec![std::f64::consts::FRAC_PI_4; r.k_states - 1];
    r.with_split(&angles, 0.0, rebirth).cl2_normalized()
}

fn fit_full(
    counts: &TransitionCounts,
    cfg: &OptimizerConfig,
    init: &Cl2Init,
    mode: FitMode,
) -> Result<EstimationResult> {
    check_counts(counts, true)?;
    let k = counts.k_states;
    let rebirth = rebirth_for(counts);
    let gh = GaussHermite::new(cfg.quad_nodes.max(8));
    let with_one = mode == FitMode::Cl12;
    let total = counts.n2.sum() + if with_one { counts.n1.sum() } else { 0.0 };
    let empty = empty_origins(counts);
    let start = match init {
        Cl2Init::Moment => moment_init(counts),
        Cl2Init::WarmStart(r) => r.clone(),
    };
    let x0 = split_start(&start, &rebirth).to_unconstrained().0;
    let eval = |p: &ModelParams| {
        let two = cl2_with_rule(counts, p, &gh);
        if with_one {
            two + loglik_counts(&counts.n1, &expected_matrix(p, true))
        } else {
            two
        }
    };
    let obj = |v: &[f64]| match ModelParams::from_unconstrained(&UnconstrainedVector(v.to_vec()), k, &rebirth) {
        Ok(p) => -eval(&p).value / total,
        Err(_) => f64::INFINITY,
    };
    let (m, x) = multistart(obj, &x0, &cl2_free(k, &empty), cfg)?;
    let p = ModelParams::from_unconstrained(&UnconstrainedVector(x), k, &rebirth)?;
    let ll = eval(&p);
    Ok(EstimationResult {
        mode,
        names: param_names(Mode::Cl2, k),
        estimates: p.to_natural_cl2(),
        reduced: match init {
            Cl2Init::WarmStart(r) => Some(r.clone()),
            Cl2Init::Moment => None,
        },
        params: Some(p),
        objective: ll.value,
        grad_norm: m.grad_norm,
        iterations: m.iterations,
        converged: m.converged,
        zero_cells: ll.zero_cells,
        unidentified: empty.iter().map(|l| l + 1).collect(),
        rebirth_row: rebirth,
        restarts_run: cfg.restarts,
    })
}

pub fn fit_cl2(counts: &TransitionCounts, cfg: &OptimizerConfig, init: &Cl2Init) -> Result<EstimationResult> {
    fit_full(counts, cfg, init, FitMode::Cl2)
}

pub fn fit_cl12(counts: &TransitionCounts, cfg: &OptimizerConfig, init: &Cl2Init) -> Result<EstimationResult> {
    fit_full(counts, cfg, init, FitMode::Cl12)
}

/// Maps split coordinates to angles: a_1 in (0, pi/2) so beta_1 > 0, the
/// others in (-pi/2, pi/2) so every sigma stays positive.
fn split_angles(u: &[f64]) -> Vec<f64> {
    u.iter()
        .enumerate()
        .map(|(l, &x)| if l == 0 { FRAC_PI_2 / (1.0 + (-x).exp()) } else { FRAC_PI_2 * x.tanh() })
        .collect()
}

/// CL(1) for (c, delta, gamma), then CL(2) over the beta/sigma split of each
/// gamma and rho with (c, delta, gamma) held at the step-one values. The
/// second step has K free coordinates (K-1 angles and rho).
pub fn fit_two_step(counts: &TransitionCounts, cfg: &OptimizerConfig) -> Result<EstimationResult> {
    check_counts(counts, true)?;
    let step1 = fit_cl1(counts, cfg)?;
    let r = step1.reduced.clone().expect("cl1 fit has reduced params");
    let k = counts.k_states;
    let rebirth = step1.rebirth_row.clone();
    let gh = GaussHermite::new(cfg.quad_nodes.max(8));
    let total = counts.n2.sum();
    let empty = empty_origins(counts);
    let build = |u: &[f64]| r.with_split(&split_angles(&u[..k - 1]), u[k - 1].tanh(), &rebirth);
    let obj = |u: &[f64]| {
        let p = build(u);
        let v = -loglik_counts(&counts.n2, &horizon2_with_rule(&p, &gh, true)).value / total;
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut x0 = vec![0.5f64.atanh(); k];
    x0[0] = 0.0;
    x0[k - 1] = 0.0;
    let free: Vec<usize> = (0..k).filter(|l| !empty.contains(l)).collect();
    let (m, x) = multistart(obj, &x0, &free, cfg)?;
    let p = build(&x).cl2_normalized();
    p.validate()?;
    let ll: LogLik = cl2_with_rule(counts, &p, &gh);
    Ok(EstimationResult {
        mode: FitMode::TwoStep,
        names: param_names(Mode::Cl2, k),
        estimates: p.to_natural_cl2(),
        reduced: Some(r),
        params: Some(p),
        objective: ll.value,
        grad_norm: m.grad_norm,
        iterations: step1.iterations + m.iterations,
        converged: step1.converged && m.converged,
        zero_cells: ll.zero_cells,
        unidentified: empty.iter().map(|l| l + 1).collect(),
        rebirth_row: rebirth,
        restarts_run: cfg.restarts,
    })
}

/// Dispatches on the mode; CL(2)-type fits start from a CL(1) fit.
pub fn fit(counts: &TransitionCounts, mode: FitMode, cfg: &OptimizerConfig) -> Result<EstimationResult> {
    match mode {
        FitMode::Cl1 => fit_cl1(counts, cfg),
        FitMode::TwoStep => fit_two_step(counts, cfg),
        FitMode::Cl2 | FitMode::Cl12 => {
            let r = fit_cl1(counts, cfg)?.reduced.expect("cl1 fit has reduced params");
            fit_full(counts, cfg, &Cl2Init::WarmStart(r), mode)
        }
    }
}
