//! Simulation designs 1-3.
//!
//! Thresholds and intercepts are evenly spaced: c_k = 1.5 (k - 2) and
//! delta_l = -0.5 + 1.5 (l - 1), which for K = 8 gives
//! c = (0, 1.5, ..., 9) and delta = (-0.5, 1, ..., 8.5).

use crate::error::{Error, Result};
use crate::params::{default_rebirth, ModelParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Design {
    /// beta_l = sigma_l = (1+r)^(l-1) / sqrt(2).
    One,
    /// beta_l = sigma_l = (1+r)^(l-1) / sqrt(2 - rho^2).
    Two,
    /// beta_l = 1 / sqrt(2 - rho^2), sigma_l = beta_l (1+r)^(l-1).
    Three,
}

impl Design {
    pub fn from_id(id: u8) -> Result<Design> {
        match id {
            1 => Ok(Design::One),
            2 => Ok(Design::Two),
            3 => Ok(Design::Three),
            other => Err(Error::UnknownDesign(other)),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Design::One => 1,
            Design::Two => 2,
            Design::Three => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design: Design,
    pub rho: f64,
    pub growth: f64,
    pub k_states: usize,
    pub rebirth_row: Vec<f64>,
}

impl DesignSpec {
    pub fn new(design: Design, rho: f64) -> Self {
        DesignSpec { design, rho, growth: 0.05, k_states: 8, rebirth_row: default_rebirth(8) }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let k = self.k_states;
        if k < 3 {
            return Err(Error::InvalidParams("need at least 3 states".into()));
        }
        let rho = self.rho;
        let g = |l: usize| (1.0 + self.growth).powi(l as i32);
        let (beta, sigma): (Vec<f64>, Vec<f64>) = (0..k - 1)
            .map(|l| match self.design {
                Design::One => {
                    let v = g(l) / 2f64.sqrt();
                    (v, v)
                }
                Design::Two => {
                    let v = g(l) / (2.0 - rho * rho).sqrt();
                    (v, v)
                }
                Design::Three => {
                    let b = 1.0 / (2.0 - rho * rho).sqrt();
                    (b, b * g(l))
                }
            })
            .unzip();
        let p = ModelParams {
            k_states: k,
            c: (0..k - 1).map(|j| 1.5 * j as f64).collect(),
            delta: (0..k - 1).map(|l| -0.5 + 1.5 * l as f64).collect(),
            beta,
            sigma,
            rho,
            rebirth_row: self.rebirth_row.clone(),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Parameters of a design with K = 8, r = 0.05 and the default rebirth row.
pub fn design_params(design: Design, rho: f64) -> Result<ModelParams> {
    DesignSpec::new(design, rho).params()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_one_and_two() {
        let p = design_params(Design::One, 0.0).unwrap();
        assert_eq!(p.c, vec![0.0, 1.5, 3.0, 4.5, 6.0, 7.5, 9.0]);
        assert_eq!(p.delta, vec![-0.5, 1.0, 2.5, 4.0, 5.5, 7.0, 8.5]);
        assert!((p.gamma()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn design_two_loading() {
        let p = design_params(Design::Two, 0.0).unwrap();
        assert!((p.beta[6] - 0.947_590_7).abs() < 1e-6);
        let q = design_params(Design::One, 0.0).unwrap();
        assert_eq!(p.beta, q.beta);
        assert_eq!(p.sigma, q.sigma);
    }

    #[test]
    fn design_three_ratio() {
        let p = design_params(Design::Three, 0.4).unwrap();
        for l in 0..7 {
            assert!((p.beta[l] / p.sigma[l] - 1.05f64.powi(-(l as i32))).abs() < 1e-14);
        }
        assert!(p.is_cl2_normalized(1e-14));
    }

    #[test]
    fn unknown_design() {
        assert!(matches!(Design::from_id(4), Err(Error::UnknownDesign(4))));
    }
}
