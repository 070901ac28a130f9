//! Structural parameters, identification constraints and optimizer
//! coordinates.
//!
//! States are 1-based in prose and 0-based in code. `c` holds the finite
//! thresholds c_2..c_K (so `c[0]` is c_2 = 0); the implicit c_1 and c_{K+1}
//! are minus and plus infinity. `delta`, `beta`, `sigma` have one entry per
//! non-default origin state.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which set of identification constraints applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// c_2 = 0 and gamma_1 = 1, only (c, delta, gamma) identified.
    Cl1,
    /// c_2 = 0, sigma_1^2 + beta_1^2 (1 - rho^2) = 1 and beta_1 > 0.
    Cl2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k_states: usize,
    pub c: Vec<f64>,
    pub delta: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub rho: f64,
    pub rebirth_row: Vec<f64>,
}

/// Default assignment of firms replacing defaulted ones.
pub fn default_rebirth(k: usize) -> Vec<f64> {
    let mut r = vec![0.0; k];
    let head = [0.5, 0.3, 0.2];
    for (i, v) in head.iter().enumerate().take(k) {
        r[i] = *v;
    }
    if k < 3 {
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= s);
    }
    r
}

fn check_rebirth(r: &[f64], k: usize) -> Result<()> {
    if r.len() != k {
        return Err(Error::Dimension { expected: k, got: r.len() });
    }
    if r.iter().any(|v| !(*v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParams("rebirth_row must be a probability vector".into()));
    }
    Ok(())
}

fn check_thresholds(c: &[f64]) -> Result<()> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("thresholds"));
    }
    if c.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let k = self.k_states;
        if k < 3 {
            return Err(Error::InvalidParams("need at least 3 states".into()));
        }
        for (name, v) in [("c", &self.c), ("delta", &self.delta), ("beta", &self.beta), ("sigma", &self.sigma)] {
            if v.len() != k - 1 {
                return Err(Error::InvalidParams(format!("{name} must have {} entries, got {}", k - 1, v.len())));
            }
        }
        check_thresholds(&self.c)?;
        if self.c[0] != 0.0 {
            return Err(Error::InvalidParams("c_2 must be exactly 0".into()));
        }
        if self.delta.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("delta/beta"));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParams("sigma must be positive".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParams("|rho| must be < 1".into()));
        }
        if !(self.beta[0] >= 0.0) {
            return Err(Error::InvalidParams("beta_1 must be nonnegative".into()));
        }
        check_rebirth(&self.rebirth_row, k)
    }

    /// Threshold c_j for 0-based boundary index j in 0..=K (c_1 .. c_{K+1}).
    pub fn bound(&self, j: usize) -> f64 {
        bound(&self.c, self.k_states, j)
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.sigma.iter().zip(&self.beta).map(|(s, b)| s.hypot(*b)).collect()
    }

    /// sigma_1^2 + beta_1^2 (1 - rho^2), equal to 1 under the CL(2) constraint.
    pub fn cl2_scale_sq(&self) -> f64 {
        self.sigma[0].powi(2) + self.beta[0].powi(2) * (1.0 - self.rho * self.rho)
    }

    /// Divides every score-unit quantity by `s`. Matrices are unchanged.
    pub fn scaled(&self, s: f64) -> ModelParams {
        let d = |v: &Vec<f64>| v.iter().map(|x| x / s).collect::<Vec<_>>();
        ModelParams {
            c: d(&self.c),
            delta: d(&self.delta),
            beta: d(&self.beta),
            sigma: d(&self.sigma),
            ..self.clone()
        }
    }

    /// Observationally equivalent parameters satisfying the CL(2) constraints.
    pub fn cl2_normalized(&self) -> ModelParams {
        let mut p = self.scaled(self.cl2_scale_sq().sqrt());
        if p.beta[0] < 0.0 {
            p.beta.iter_mut().for_each(|b| *b = -*b);
        }
        p
    }

    pub fn is_cl2_normalized(&self, tol: f64) -> bool {
        (self.cl2_scale_sq() - 1.0).abs() <= tol && self.beta[0] > 0.0
    }

    /// Reduced (c, delta, gamma) under c_2 = 0, gamma_1 = 1. When gamma_1 is
    /// not already one the thresholds and intercepts are rescaled first.
    pub fn cl1_reduce(&self) -> ReducedParamsCL1 {
        let g = self.gamma();
        let s = g[0];
        ReducedParamsCL1 {
            k_states: self.k_states,
            c: self.c[1..].iter().map(|v| v / s).collect(),
            delta: self.delta.iter().map(|v| v / s).collect(),
            gamma: g[1..].iter().map(|v| v / s).collect(),
        }
    }

    /// Natural CL(2) coordinates: c_3..c_K, delta, beta_2.., sigma, rho.
    pub fn to_natural_cl2(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.k_states - 5);
        v.extend_from_slice(&self.c[1..]);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.beta[1..]);
        v.extend_from_slice(&self.sigma);
        v.push(self.rho);
        v
    }

    /// Inverse of [`ModelParams::to_natural_cl2`]; beta_1 is derived from
    /// (sigma_1, rho).
    pub fn from_natural_cl2(v: &[f64], k: usize, rebirth: &[f64]) -> Result<ModelParams> {
        let n = 4 * k - 5;
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
        let (cv, rest) = v.split_at(k - 2);
        let (delta, rest) = rest.split_at(k - 1);
        let (beta_rest, rest) = rest.split_at(k - 2);
        let (sigma, rest) = rest.split_at(k - 1);
        let rho = rest[0];
        let b1 = beta1_from_constraint(sigma[0], rho)?;
        let mut c = vec![0.0];
        c.extend_from_slice(cv);
        let mut beta = vec![b1];
        beta.extend_from_slice(beta_rest);
        let p = ModelParams {
            k_states: k,
            c,
            delta: delta.to_vec(),
            beta,
            sigma: sigma.to_vec(),
            rho,
            rebirth_row: rebirth.to_vec(),
        };
        p.validate()?;
        Ok(p)
    }
}

pub(crate) fn bound(c: &[f64], k: usize, j: usize) -> f64 {
    if j == 0 {
        f64::NEG_INFINITY
    } else if j >= k {
        f64::INFINITY
    } else {
        c[j - 1]
    }
}

/// Parameters identified by CL(1): thresholds c_3..c_K, intercepts, and
/// gamma_2..gamma_{K-1} (c_2 = 0 and gamma_1 = 1 are implicit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedParamsCL1 {
    pub k_states: usize,
    pub c: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ReducedParamsCL1 {
    pub fn validate(&self) -> Result<()> {
        let k = self.k_states;
        if k < 3 {
            return Err(Error::InvalidParams("need at least 3 states".into()));
        }
        if self.c.len() != k - 2 || self.gamma.len() != k - 2 || self.delta.len() != k - 1 {
            return Err(Error::InvalidParams("reduced parameter lengths do not match K".into()));
        }
        check_thresholds(&self.full_c())?;
        if self.delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("delta"));
        }
        if self.gamma.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidParams("gamma must be positive".into()));
        }
        Ok(())
    }

    /// c_2..c_K including the pinned zero.
    pub fn full_c(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.k_states - 1);
        c.push(0.0);
        c.extend_from_slice(&self.c);
        c
    }

    /// gamma_1..gamma_{K-1} including the pinned one.
    pub fn full_gamma(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.k_states - 1);
        g.push(1.0);
        g.extend_from_slice(&self.gamma);
        g
    }

    pub fn to_natural(&self) -> Vec<f64> {
        let mut v = self.c.clone();
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.gamma);
        v
    }

    pub fn from_natural(v: &[f64], k: usize) -> Result<ReducedParamsCL1> {
        let n = 3 * k - 5;
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
        let r = ReducedParamsCL1 {
            k_states: k,
            c: v[..k - 2].to_vec(),
            delta: v[k - 2..2 * k - 3].to_vec(),
            gamma: v[2 * k - 3..].to_vec(),
        };
        r.validate()?;
        Ok(r)
    }

    /// A full parameter set with the given beta/sigma split angle per state
    /// (beta_l = gamma_l sin a_l, sigma_l = gamma_l cos a_l).
    pub fn with_split(&self, angles: &[f64], rho: f64, rebirth: &[f64]) -> ModelParams {
        let g = self.full_gamma();
        ModelParams {
            k_states: self.k_states,
            c: self.full_c(),
            delta: self.delta.clone(),
            beta: g.iter().zip(angles).map(|(g, a)| g * a.sin()).collect(),
            sigma: g.iter().zip(angles).map(|(g, a)| g * a.cos()).collect(),
            rho,
            rebirth_row: rebirth.to_vec(),
        }
    }
}

/// Positive beta_1 solving sigma_1^2 + beta_1^2 (1 - rho^2) = 1.
pub fn beta1_from_constraint(sigma1: f64, rho: f64) -> Result<f64> {
    if !(sigma1 > 0.0 && sigma1 < 1.0) {
        return Err(Error::InvalidParams(format!("sigma_1 = {sigma1} must lie in (0, 1)")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParams("|rho| must be < 1".into()));
    }
    Ok(((1.0 - sigma1 * sigma1) / (1.0 - rho * rho)).sqrt())
}

pub fn n_free(mode: Mode, k: usize) -> usize {
    match mode {
        Mode::Cl1 => 3 * k - 5,
        Mode::Cl2 => 4 * k - 5,
    }
}

/// Labels of the natural coordinates, 1-based as in the tables.
pub fn param_names(mode: Mode, k: usize) -> Vec<String> {
    let mut n: Vec<String> = (3..=k).map(|j| format!("c{j}")).collect();
    n.extend((1..k).map(|l| format!("delta{l}")));
    match mode {
        Mode::Cl1 => n.extend((2..k).map(|l| format!("gamma{l}"))),
        Mode::Cl2 => {
            n.extend((2..k).map(|l| format!("beta{l}")));
            n.extend((1..k).map(|l| format!("sigma{l}")));
            n.push("rho".into());
        }
    }
    n
}

/// Point in the reals mapped onto valid parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedVector(pub Vec<f64>);

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn push_increments(out: &mut Vec<f64>, c_above_zero: &[f64]) {
    let mut prev = 0.0;
    for &c in c_above_zero {
        out.push((c - prev).ln());
        prev = c;
    }
}

fn cumulate(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x.exp();
            acc
        })
        .collect()
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("unconstrained vector"))
    }
}

impl ReducedParamsCL1 {
    pub fn to_unconstrained(&self) -> UnconstrainedVector {
        let mut v = Vec::with_capacity(3 * self.k_states - 5);
        push_increments(&mut v, &self.c);
        v.extend_from_slice(&self.delta);
        v.extend(self.gamma.iter().map(|g| g.ln()));
        UnconstrainedVector(v)
    }

    pub fn from_unconstrained(u: &UnconstrainedVector, k: usize) -> Result<ReducedParamsCL1> {
        let v = &u.0;
        let n = 3 * k - 5;
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
        check_finite(v)?;
        let r = ReducedParamsCL1 {
            k_states: k,
            c: cumulate(&v[..k - 2]),
            delta: v[k - 2..2 * k - 3].to_vec(),
            gamma: v[2 * k - 3..].iter().map(|x| x.exp()).collect(),
        };
        r.validate()?;
        Ok(r)
    }
}

impl ModelParams {
    /// CL(2) optimizer coordinates. Requires the CL(2) normalization.
    pub fn to_unconstrained(&self) -> UnconstrainedVector {
        let k = self.k_states;
        let mut v = Vec::with_capacity(4 * k - 5);
        push_increments(&mut v, &self.c[1..]);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.beta[1..]);
        v.push(logit(self.sigma[0]));
        v.extend(self.sigma[1..].iter().map(|s| s.ln()));
        v.push(self.rho.atanh());
        UnconstrainedVector(v)
    }

    pub fn from_unconstrained(u: &UnconstrainedVector, k: usize, rebirth: &[f64]) -> Result<ModelParams> {
        let v = &u.0;
        let n = 4 * k - 5;
        if v.len() != n {
            return Err(Error::Dimension { expected: n, got: v.len() });
        }
        check_finite(v)?;
        let (cv, rest) = v.split_at(k - 2);
        let (delta, rest) = rest.split_at(k - 1);
        let (beta_rest, rest) = rest.split_at(k - 2);
        let (sv, rest) = rest.split_at(k - 1);
        let rho = rest[0].tanh();
        let s1 = logistic(sv[0]);
        let mut sigma = vec![s1];
        sigma.extend(sv[1..].iter().map(|x| x.exp()));
        let mut c = vec![0.0];
        c.extend(cumulate(cv));
        let mut beta = vec![beta1_from_constraint(s1, rho)?];
        beta.extend_from_slice(beta_rest);
        let p = ModelParams {
            k_states: k,
            c,
            delta: delta.to_vec(),
            beta,
            sigma,
            rho,
            rebirth_row: rebirth.to_vec(),
        };
        p.validate()?;
        Ok(p)
    }
}
