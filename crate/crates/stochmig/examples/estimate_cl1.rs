//! One-step composite likelihood fit with HAC standard errors.
//!
//! cargo run --release --example estimate_cl1

use stochmig::design::{Design, DesignSpec};
use stochmig::estimator::{fit, FitMode, OptimizerConfig};
use stochmig::hac::{estimate, t_statistics, HacConfig};
use stochmig::likelihood::{build_counts, TwoStepMode};
use stochmig::simulate::{simulate_panel, InitialRating};

fn main() -> stochmig::error::Result<()> {
    let theta = DesignSpec::new(Design::One, 0.0).params()?;
    let panel = simulate_panel(&theta, 500, 120, &InitialRating::StationaryNoDefault, 11, false)?;
    let counts = build_counts(&panel, TwoStepMode::Direct)?;

    let est = fit(&counts, FitMode::Cl1, &OptimizerConfig::default())?;
    println!("converged: {} after {} iterations, |grad| {:.1e}", est.converged, est.iterations, est.grad_norm);

    let cov = estimate(&counts, &est, &HacConfig::default())?;
    let truth = theta.cl1_reduce().to_natural();
    let t = t_statistics(&est.estimates, &cov.se, &truth)?;
    println!("{:<8} {:>8} {:>8} {:>8} {:>7}", "param", "true", "est", "se", "t");
    for j in 0..truth.len() {
        println!(
            "{:<8} {:>8.3} {:>8.3} {:>8.3} {:>7.2}",
            est.names[j],
            truth[j],
            est.estimates[j],
            cov.se[j],
            t[j].unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
