//! Migration counts and composite log-likelihoods.

use crate::error::{Error, Result};
use crate::kernel::{conditional_matrix, expected_matrix, expected_matrix_reduced, horizon2_matrix, horizon2_with_rule, Integration, Matrix};
use crate::params::{ModelParams, ReducedParamsCL1};
use crate::quadrature::GaussHermite;
use crate::simulate::{FactorPath, RatingPanel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwoStepMode {
    /// Tally pairs (y_{t-2}, y_t) directly.
    #[default]
    Direct,
    /// Chain one-step counts through estimated one-step frequencies.
    Smoothed,
}

/// One-step and two-step migration counts. Entry (k, l) of every matrix
/// counts moves to k from l. `n1_t[i]` holds the moves into date i+1 and
/// `n2_t[i]` the two-step moves into date i+2.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounts {
    pub k_states: usize,
    pub n_firms: usize,
    pub n1_t: Vec<Matrix>,
    pub n1: Matrix,
    pub n2_t: Vec<Matrix>,
    pub n2: Matrix,
    /// Origin occupancy n_{l,t-1} for each one-step date.
    pub nl_t: Vec<Vec<f64>>,
    pub two_step_mode: TwoStepMode,
}

pub fn build_counts(panel: &RatingPanel, mode: TwoStepMode) -> Result<TransitionCounts> {
    let k = panel.k_states;
    let t_len = panel.t_len;
    if t_len < 2 {
        return Err(Error::TooShort { need: 2, got: t_len });
    }
    if let Some(&bad) = panel.ratings.iter().find(|&&r| r >= k) {
        return Err(Error::RatingOutOfRange { rating: bad as i64 + 1, k });
    }
    let mut n1_t = vec![Matrix::zeros(k, k); t_len - 1];
    let mut nl_t = vec![vec![0.0; k]; t_len - 1];
    let mut n2_t = vec![Matrix::zeros(k, k); t_len.saturating_sub(2)];
    for i in 0..panel.n_firms {
        let row = panel.firm(i);
        for t in 1..t_len {
            n1_t[t - 1][(row[t], row[t - 1])] += 1.0;
            nl_t[t - 1][row[t - 1]] += 1.0;
            if mode == TwoStepMode::Direct && t >= 2 {
                n2_t[t - 2][(row[t], row[t - 2])] += 1.0;
            }
        }
    }
    if mode == TwoStepMode::Smoothed {
        for t in 2..t_len {
            let cur = &n1_t[t - 1];
            let prev = &n1_t[t - 2];
            let occ = &nl_t[t - 1];
            let mut phat = Matrix::zeros(k, k);
            for j in 0..k {
                if occ[j] > 0.0 {
                    for kk in 0..k {
                        phat[(kk, j)] = cur[(kk, j)] / occ[j];
                    }
                }
            }
            n2_t[t - 2] = phat * prev;
        }
    }
    let sum = |v: &[Matrix]| v.iter().fold(Matrix::zeros(k, k), |a, m| a + m);
    Ok(TransitionCounts {
        k_states: k,
        n_firms: panel.n_firms,
        n1: sum(&n1_t),
        n2: sum(&n2_t),
        n1_t,
        n2_t,
        nl_t,
        two_step_mode: mode,
    })
}

impl TransitionCounts {
    /// Empirical destination shares out of the default state, if any
    /// default was observed.
    pub fn rebirth_estimate(&self) -> Option<Vec<f64>> {
        let k = self.k_states;
        let col = self.n1.column(k - 1);
        let s = col.sum();
        (s > 0.0).then(|| col.iter().map(|v| v / s).collect())
    }

    /// Occupancy of each origin state over all one-step dates.
    pub fn origin_totals(&self) -> Vec<f64> {
        (0..self.k_states).map(|l| self.n1.column(l).sum()).collect()
    }

    pub fn scaled(&self, s: f64) -> TransitionCounts {
        TransitionCounts {
            n1_t: self.n1_t.iter().map(|m| m * s).collect(),
            n1: &self.n1 * s,
            n2_t: self.n2_t.iter().map(|m| m * s).collect(),
            n2: &self.n2 * s,
            nl_t: self.nl_t.iter().map(|v| v.iter().map(|x| x * s).collect()).collect(),
            ..self.clone()
        }
    }
}

/// A log-likelihood value. Cells with positive count but zero modelled
/// probability contribute `ZERO_PROB_LOG` each and are counted in
/// `zero_cells`, so the value stays finite for line searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub zero_cells: usize,
}

pub const ZERO_PROB_LOG: f64 = -745.0;

impl LogLik {
    pub fn is_finite_support(&self) -> bool {
        self.zero_cells == 0
    }
}

impl std::ops::Add for LogLik {
    type Output = LogLik;
    fn add(self, o: LogLik) -> LogLik {
        LogLik { value: self.value + o.value, zero_cells: self.zero_cells + o.zero_cells }
    }
}

pub fn loglik_counts(n: &Matrix, p: &Matrix) -> LogLik {
    let mut value = 0.0;
    let mut zero_cells = 0;
    for (nv, pv) in n.iter().zip(p.iter()) {
        if *nv > 0.0 {
            if *pv > 0.0 {
                value += nv * pv.ln();
            } else {
                value += nv * ZERO_PROB_LOG;
                zero_cells += 1;
            }
        }
    }
    LogLik { value, zero_cells }
}

pub fn cl1(counts: &TransitionCounts, r: &ReducedParamsCL1, rebirth: &[f64]) -> LogLik {
    loglik_counts(&counts.n1, &expected_matrix_reduced(r, rebirth, true))
}

pub fn cl2(counts: &TransitionCounts, theta: &ModelParams, integ: Integration) -> Result<LogLik> {
    Ok(loglik_counts(&counts.n2, &horizon2_matrix(theta, integ, true)?))
}

pub fn cl2_with_rule(counts: &TransitionCounts, theta: &ModelParams, gh: &GaussHermite) -> LogLik {
    loglik_counts(&counts.n2, &horizon2_with_rule(theta, gh, true))
}

/// CL(1) + CL(2) at the same full parameter.
pub fn cl12(counts: &TransitionCounts, theta: &ModelParams, integ: Integration) -> Result<LogLik> {
    Ok(loglik_counts(&counts.n1, &expected_matrix(theta, true)) + cl2(counts, theta, integ)?)
}

/// Log-likelihood of the one-step moves given a realised factor path with
/// one value per panel date.
pub fn conditional_loglik(counts: &TransitionCounts, theta: &ModelParams, f_path: &FactorPath) -> Result<LogLik> {
    let dates = counts.n1_t.len() + 1;
    if f_path.f.len() != dates {
        return Err(Error::Dimension { expected: dates, got: f_path.f.len() });
    }
    Ok(counts
        .n1_t
        .iter()
        .enumerate()
        .map(|(i, n)| loglik_counts(n, &conditional_matrix(theta, f_path.f[i + 1], true)))
        .fold(LogLik { value: 0.0, zero_cells: 0 }, |a, b| a + b))
}
