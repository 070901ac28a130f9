//! Monte-Carlo replication batteries.
//!
//! Replication r simulates with seed `derive(base, [REPLICATION_STREAM, r])`,
//! so results are a pure function of the config whatever the worker count.
//! Summaries use compensated summation in replication order.

use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::estimator::{fit, FitMode, OptimizerConfig};
use crate::hac::{estimate, t_statistics, HacConfig};
use crate::likelihood::{build_counts, TwoStepMode};
use crate::params::param_names;
use crate::risk::{dp1_reduced, risk_measures, RiskConfig, RiskMeasures, DEFAULT_HORIZONS};
use crate::rng;
use crate::simulate::{simulate_panel, InitialRating};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryConfig {
    pub design: DesignSpec,
    pub n_firms: usize,
    pub t_len: usize,
    pub reps: usize,
    pub seed: u64,
    pub mode: FitMode,
    pub two_step_counts: TwoStepMode,
    pub optimizer: OptimizerConfig,
    pub hac: HacConfig,
    /// None skips the risk measures.
    pub risk: Option<RiskConfig>,
    pub horizons: Vec<usize>,
    /// Thread count; None uses the global pool.
    pub workers: Option<usize>,
}

impl BatteryConfig {
    /// Desk-scale defaults: N = 500, T = 120, 25 replications.
    pub fn desk(design: DesignSpec, mode: FitMode) -> Self {
        BatteryConfig {
            design,
            n_firms: 500,
            t_len: 120,
            reps: 25,
            seed: 1,
            mode,
            two_step_counts: TwoStepMode::Direct,
            optimizer: OptimizerConfig::default(),
            hac: HacConfig::default(),
            risk: None,
            horizons: DEFAULT_HORIZONS.to_vec(),
            workers: None,
        }
    }

    /// Full-scale replication count and cross-section.
    pub fn full_scale(design: DesignSpec, mode: FitMode, t_len: usize) -> Self {
        BatteryConfig { n_firms: 1000, t_len, reps: 1000, ..Self::desk(design, mode) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub t_stats: Vec<Option<f64>>,
    pub converged: bool,
    pub grad_norm: f64,
    pub dp1: Option<f64>,
    pub risk: Option<RiskMeasures>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub names: Vec<String>,
    pub truth: Vec<f64>,
    pub mean_estimate: Vec<f64>,
    pub mean_abs_bias: Vec<f64>,
    /// sqrt of the average estimated variance se^2.
    pub mean_se: Vec<f64>,
    pub replications: Vec<Replication>,
    pub failures: usize,
    pub not_converged: usize,
    pub risk_truth: Option<RiskMeasures>,
    pub risk_mean: Option<RiskMeasures>,
    pub dp1_truth: f64,
    pub dp1_mean: Option<f64>,
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn mean<I: IntoIterator<Item = f64>>(it: I) -> Option<f64> {
    let v: Vec<f64> = it.into_iter().collect();
    (!v.is_empty()).then(|| compensated_sum(v.iter().copied()) / v.len() as f64)
}

fn run_one(cfg: &BatteryConfig, index: usize, truth: &[f64]) -> Replication {
    let seed = rng::derive(cfg.seed, &[rng::REPLICATION_STREAM, index as u64]);
    let mut rep = Replication {
        index,
        seed,
        estimates: Vec::new(),
        se: Vec::new(),
        t_stats: Vec::new(),
        converged: false,
        grad_norm: f64::NAN,
        dp1: None,
        risk: None,
        error: None,
    };
    let mut body = || -> Result<()> {
        let theta = cfg.design.params()?;
        let panel = simulate_panel(&theta, cfg.n_firms, cfg.t_len, &InitialRating::StationaryNoDefault, seed, false)?;
        let counts = build_counts(&panel, cfg.two_step_counts)?;
        let opt = OptimizerConfig { seed, ..cfg.optimizer };
        let est = fit(&counts, cfg.mode, &opt)?;
        let cov = estimate(&counts, &est, &cfg.hac)?;
        rep.t_stats = t_statistics(&est.estimates, &cov.se, truth)?;
        rep.estimates = est.estimates.clone();
        rep.se = cov.se;
        rep.converged = est.converged;
        rep.grad_norm = est.grad_norm;
        if let Some(r) = &est.reduced {
            if est.mode == FitMode::Cl1 {
                rep.dp1 = Some(dp1_reduced(r, &est.rebirth_row));
            }
        }
        if let (Some(rc), Some(p)) = (&cfg.risk, &est.params) {
            let m = risk_measures(p, &cfg.horizons, rc)?;
            rep.dp1 = Some(m.dp1);
            rep.risk = Some(m);
        }
        Ok(())
    };
    if let Err(e) = body() {
        rep.error = Some(e.to_string());
    }
    rep
}

fn average_risk(rs: &[&RiskMeasures]) -> Option<RiskMeasures> {
    let first = rs.first()?;
    Some(RiskMeasures {
        dp1: mean(rs.iter().map(|r| r.dp1))?,
        dp2: mean(rs.iter().map(|r| r.dp2))?,
        pd: first
            .pd
            .iter()
            .enumerate()
            .map(|(i, (h, _))| (*h, mean(rs.iter().map(|r| r.pd[i].1)).unwrap_or(f64::NAN)))
            .collect(),
    })
}

pub fn run_battery(cfg: &BatteryConfig) -> Result<McSummary> {
    if cfg.reps == 0 || cfg.n_firms == 0 {
        return Err(Error::Config("battery needs at least one replication and one firm".into()));
    }
    if cfg.t_len < 5 {
        return Err(Error::TooShort { need: 5, got: cfg.t_len });
    }
    let theta = cfg.design.params()?;
    let k = theta.k_states;
    let pmode = cfg.mode.param_mode();
    let truth = match cfg.mode {
        FitMode::Cl1 => theta.cl1_reduce().to_natural(),
        _ => theta.cl2_normalized().to_natural_cl2(),
    };
    let work = || -> Vec<Replication> { (0..cfg.reps).into_par_iter().map(|r| run_one(cfg, r, &truth)).collect() };
    let replications = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let ok: Vec<&Replication> = replications.iter().filter(|r| r.error.is_none()).collect();
    let d = truth.len();
    let col = |f: &dyn Fn(&Replication, usize) -> f64| -> Vec<f64> {
        (0..d).map(|j| mean(ok.iter().map(|r| f(r, j))).unwrap_or(f64::NAN)).collect()
    };
    let mean_estimate = col(&|r, j| r.estimates[j]);
    let mean_abs_bias = col(&|r, j| (r.estimates[j] - truth[j]).abs());
    let mean_se = col(&|r, j| r.se[j] * r.se[j]).into_iter().map(f64::sqrt).collect();
    let risks: Vec<&RiskMeasures> = ok.iter().filter_map(|r| r.risk.as_ref()).collect();
    let risk_truth = match &cfg.risk {
        Some(rc) => Some(risk_measures(&theta, &cfg.horizons, rc)?),
        None => None,
    };
    Ok(McSummary {
        names: param_names(pmode, k),
        mean_estimate,
        mean_abs_bias,
        mean_se,
        failures: replications.len() - ok.len(),
        not_converged: ok.iter().filter(|r| !r.converged).count(),
        risk_mean: average_risk(&risks),
        risk_truth,
        dp1_truth: dp1_reduced(&theta.cl1_reduce(), &theta.rebirth_row),
        dp1_mean: mean(ok.iter().filter_map(|r| r.dp1)),
        truth,
        replications,
    })
}
