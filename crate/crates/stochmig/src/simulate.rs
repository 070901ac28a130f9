//! Rating panel simulation with an AR(1) factor and birth-death
//! rebalancing of defaults.
//!
//! Column 0 of a panel holds the initial ratings; the move into column t
//! uses factor value `f[t]`, so `f[0]` is the pre-sample draw. The factor
//! uses substream `(seed, FACTOR_STREAM)` and firm i uses
//! `(seed, FIRM_STREAM, i)`, drawing one uniform for the initial rating and
//! one normal per later date whether or not the firm was reborn.

use crate::error::{Error, Result};
use crate::kernel::{conditional_matrix, expected_matrix, stationary_distribution};
use crate::params::ModelParams;
use crate::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPath {
    pub f: Vec<f64>,
    pub rho: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialRating {
    /// Adjusted stationary distribution restricted to non-default states.
    StationaryNoDefault,
    /// Every firm starts in this (0-based) state.
    Fixed(usize),
    Distribution(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingPanel {
    pub k_states: usize,
    pub n_firms: usize,
    pub t_len: usize,
    /// 0-based states, firm-major: `ratings[i * t_len + t]`.
    pub ratings: Vec<usize>,
    /// Latent scores; NaN where the rating was not produced by a score
    /// (initial date and rebirths).
    pub scores: Option<Vec<f64>>,
    pub factor: Option<FactorPath>,
    pub seed: Option<u64>,
}

impl RatingPanel {
    pub fn from_ratings(k_states: usize, n_firms: usize, t_len: usize, ratings: Vec<usize>) -> Result<Self> {
        if ratings.len() != n_firms * t_len {
            return Err(Error::Dimension { expected: n_firms * t_len, got: ratings.len() });
        }
        if let Some(&bad) = ratings.iter().find(|&&r| r >= k_states) {
            return Err(Error::RatingOutOfRange { rating: bad as i64 + 1, k: k_states });
        }
        Ok(RatingPanel { k_states, n_firms, t_len, ratings, scores: None, factor: None, seed: None })
    }

    pub fn rating(&self, firm: usize, t: usize) -> usize {
        self.ratings[firm * self.t_len + t]
    }

    pub fn firm(&self, firm: usize) -> &[usize] {
        &self.ratings[firm * self.t_len..(firm + 1) * self.t_len]
    }
}

pub fn simulate_factor(rho: f64, t_len: usize, seed: u64) -> FactorPath {
    let mut r = rng::stream(seed, &[rng::FACTOR_STREAM]);
    let innov = (1.0 - rho * rho).sqrt();
    let mut f = Vec::with_capacity(t_len);
    let mut cur: f64 = StandardNormal.sample(&mut r);
    for t in 0..t_len {
        if t > 0 {
            let e: f64 = StandardNormal.sample(&mut r);
            cur = rho * cur + innov * e;
        }
        f.push(cur);
    }
    FactorPath { f, rho, seed }
}

fn draw_categorical<R: Rng>(r: &mut R, probs: &[f64]) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

fn initial_distribution(theta: &ModelParams, init: &InitialRating) -> Result<Vec<f64>> {
    let k = theta.k_states;
    let mut d = match init {
        InitialRating::StationaryNoDefault => {
            let mut pi = stationary_distribution(&expected_matrix(theta, true))?;
            pi[k - 1] = 0.0;
            pi
        }
        InitialRating::Fixed(s) => {
            if *s >= k {
                return Err(Error::RatingOutOfRange { rating: *s as i64 + 1, k });
            }
            let mut v = vec![0.0; k];
            v[*s] = 1.0;
            v
        }
        InitialRating::Distribution(v) => {
            if v.len() != k {
                return Err(Error::Dimension { expected: k, got: v.len() });
            }
            if v.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidParams("initial distribution must be nonnegative".into()));
            }
            v.clone()
        }
    };
    let s: f64 = d.iter().sum();
    if !(s > 0.0) {
        return Err(Error::InvalidParams("initial distribution has no mass".into()));
    }
    d.iter_mut().for_each(|p| *p /= s);
    Ok(d)
}

pub fn simulate_panel(
    theta: &ModelParams,
    n_firms: usize,
    t_len: usize,
    init: &InitialRating,
    seed: u64,
    keep_scores: bool,
) -> Result<RatingPanel> {
    theta.validate()?;
    if t_len == 0 {
        return Err(Error::TooShort { need: 1, got: 0 });
    }
    let k = theta.k_states;
    let start = initial_distribution(theta, init)?;
    let factor = simulate_factor(theta.rho, t_len, seed);
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n_firms)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[rng::FIRM_STREAM, i as u64]);
            let mut ratings = Vec::with_capacity(t_len);
            let mut scores = Vec::with_capacity(if keep_scores { t_len } else { 0 });
            let mut cur = draw_categorical(&mut r, &start);
            ratings.push(cur);
            if keep_scores {
                scores.push(f64::NAN);
            }
            for t in 1..t_len {
                let u: f64 = StandardNormal.sample(&mut r);
                let score;
                if cur == k - 1 {
                    cur = draw_categorical(&mut r, &theta.rebirth_row);
                    score = f64::NAN;
                } else {
                    let y = theta.delta[cur] + theta.beta[cur] * factor.f[t] + theta.sigma[cur] * u;
                    cur = theta.c.partition_point(|c| *c <= y);
                    score = y;
                }
                ratings.push(cur);
                if keep_scores {
                    scores.push(score);
                }
            }
            (ratings, scores)
        })
        .collect();
    let mut ratings = Vec::with_capacity(n_firms * t_len);
    let mut scores = Vec::new();
    for (r, s) in rows {
        ratings.extend(r);
        scores.extend(s);
    }
    Ok(RatingPanel {
        k_states: k,
        n_firms,
        t_len,
        ratings,
        scores: keep_scores.then_some(scores),
        factor: Some(factor),
        seed: Some(seed),
    })
}

/// Probability of keeping the previous rating at each date t >= 1 given the
/// realised factor. Entry t-1 refers to the move into date t.
pub fn stability_series(panel: &RatingPanel, theta: &ModelParams, firm: usize) -> Result<Vec<f64>> {
    if firm >= panel.n_firms {
        return Err(Error::FirmOutOfRange(firm));
    }
    let f = panel
        .factor
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("panel has no factor path".into()))?;
    let row = panel.firm(firm);
    Ok((1..panel.t_len)
        .map(|t| {
            let l = row[t - 1];
            conditional_matrix(theta, f.f[t], true)[(l, l)]
        })
        .collect())
}
