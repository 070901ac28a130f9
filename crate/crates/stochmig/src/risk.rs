//! Downgrade and default probabilities for a firm currently rated A
//! (state 3).

use crate::error::{Error, Result};
use crate::kernel::{expected_matrix, expected_matrix_reduced, horizon2_matrix, horizon_h_column, Integration};
use crate::params::{ModelParams, ReducedParamsCL1};
use serde::{Deserialize, Serialize};

/// 0-based index of rating A.
pub const RATING_A: usize = 2;
/// Factor paths for horizons beyond two.
pub const DEFAULT_PATHS: usize = 5000;
pub const DEFAULT_SEED: u64 = 20_120_901;
pub const DEFAULT_HORIZONS: [usize; 4] = [1, 12, 24, 36];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskMeasures {
    /// P(rating worse than A after one month).
    pub dp1: f64,
    pub dp2: f64,
    /// (horizon, P(in default at horizon)), default rebalanced by rebirth.
    pub pd: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    pub paths: usize,
    pub seed: u64,
    pub quad_nodes: usize,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig { paths: DEFAULT_PATHS, seed: DEFAULT_SEED, quad_nodes: 64 }
    }
}

fn worse_than_a(col: impl Iterator<Item = f64>) -> f64 {
    col.skip(RATING_A + 1).sum()
}

pub fn risk_measures(theta: &ModelParams, horizons: &[usize], cfg: &RiskConfig) -> Result<RiskMeasures> {
    let k = theta.k_states;
    if k < RATING_A + 2 {
        return Err(Error::InvalidParams("risk measures need rating A (state 3) and a default state".into()));
    }
    let p1 = expected_matrix(theta, true);
    let p2 = horizon2_matrix(theta, Integration::GaussHermite(cfg.quad_nodes), true)?;
    let long: Vec<usize> = horizons.iter().copied().filter(|&h| h > 2).collect();
    let cols = if long.is_empty() { Vec::new() } else { horizon_h_column(theta, RATING_A, &long, cfg.paths, cfg.seed, true) };
    let pd = horizons
        .iter()
        .map(|&h| {
            let v = match h {
                0 => 0.0,
                1 => p1[(k - 1, RATING_A)],
                2 => p2[(k - 1, RATING_A)],
                _ => cols[long.iter().position(|&x| x == h).expect("horizon listed")][k - 1],
            };
            (h, v)
        })
        .collect();
    Ok(RiskMeasures {
        dp1: worse_than_a(p1.column(RATING_A).iter().copied()),
        dp2: worse_than_a(p2.column(RATING_A).iter().copied()),
        pd,
    })
}

/// One-month downgrade probability from reduced parameters (all a CL(1)
/// fit identifies).
pub fn dp1_reduced(r: &ReducedParamsCL1, rebirth: &[f64]) -> f64 {
    let p = expected_matrix_reduced(r, rebirth, true);
    worse_than_a(p.column(RATING_A).iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{design_params, Design};
    use crate::normal;

    #[test]
    fn one_month_is_closed_form() {
        let p = design_params(Design::Two, 0.0).unwrap();
        let r = risk_measures(&p, &[1], &RiskConfig::default()).unwrap();
        let g = p.sigma[2].hypot(p.beta[2]);
        let expect = normal::sf((3.0 - 2.5) / g);
        assert!((r.dp1 - expect).abs() < 1e-12);
        assert!((r.dp1 - 0.3252).abs() < 2e-4);
        assert!((dp1_reduced(&p.cl1_reduce(), &p.rebirth_row) - r.dp1).abs() < 1e-12);
    }

    #[test]
    fn pinned_mass_never_downgrades() {
        let mut p = design_params(Design::One, 0.0).unwrap();
        p.beta = vec![0.0; 7];
        p.sigma = vec![1.0; 7];
        p.delta[2] = -50.0;
        let r = risk_measures(&p, &[1], &RiskConfig::default()).unwrap();
        assert!(r.dp1 < 1e-300);
    }

    #[test]
    fn deterministic() {
        let p = design_params(Design::Three, 0.4).unwrap();
        let cfg = RiskConfig { paths: 200, ..Default::default() };
        let a = risk_measures(&p, &DEFAULT_HORIZONS, &cfg).unwrap();
        let b = risk_measures(&p, &DEFAULT_HORIZONS, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.pd.iter().all(|(_, v)| (0.0..=1.0).contains(v)));
    }
}
