//! Quadratic-spectral HAC covariance: kernel weights, bandwidth choice and
//! how the standard errors move with the bandwidth.
//!
//! cargo run --release --example hac_inference

use stochmig::design::{Design, DesignSpec};
use stochmig::estimator::{fit, FitMode, OptimizerConfig};
use stochmig::hac::{bandwidth, estimate, qs_kernel, HacConfig};
use stochmig::likelihood::{build_counts, TwoStepMode};
use stochmig::simulate::{simulate_panel, InitialRating};

fn main() -> stochmig::error::Result<()> {
    for x in [0.0, 0.5, 1.0, 2.0] {
        println!("k({x}) = {:.4}", qs_kernel(x));
    }
    for t in [60, 120, 240] {
        println!("B_T({t}) = {:.3}", bandwidth(t));
    }

    let theta = DesignSpec::new(Design::One, 0.4).params()?;
    let panel = simulate_panel(&theta, 500, 120, &InitialRating::StationaryNoDefault, 2, false)?;
    let counts = build_counts(&panel, TwoStepMode::Direct)?;
    let est = fit(&counts, FitMode::Cl1, &OptimizerConfig::default())?;

    println!("{:<8} {:>9} {:>9} {:>9}", "param", "B=0.5", "default", "B=8");
    let runs: Vec<_> = [Some(0.5), None, Some(8.0)]
        .into_iter()
        .map(|b| estimate(&counts, &est, &HacConfig { bandwidth: b, ..HacConfig::default() }))
        .collect::<Result<_, _>>()?;
    for (j, name) in est.names.iter().enumerate().step_by(3) {
        println!("{name:<8} {:>9.4} {:>9.4} {:>9.4}", runs[0].se[j], runs[1].se[j], runs[2].se[j]);
    }
    println!("lags used at the default bandwidth: {}", runs[1].lags_used);
    Ok(())
}
