//! A small Monte-Carlo battery: bias, standard errors and coverage of the
//! one-step estimator.
//!
//! cargo run --release --example mc_battery

use stochmig::battery::{run_battery, BatteryConfig};
use stochmig::design::{Design, DesignSpec};
use stochmig::estimator::FitMode;

fn main() -> stochmig::error::Result<()> {
    let mut cfg = BatteryConfig::desk(DesignSpec::new(Design::One, 0.0), FitMode::Cl1);
    cfg.reps = 20;
    let s = run_battery(&cfg)?;
    println!("{} replications, {} failed, {} not converged", cfg.reps, s.failures, s.not_converged);
    println!("{:<8} {:>7} {:>9} {:>8} {:>8}", "param", "true", "|bias|", "se", "|t|<1.96");
    for j in 0..s.names.len() {
        let ok = s.replications.iter().filter(|r| r.t_stats.get(j).copied().flatten().is_some_and(|t| t.abs() <= 1.96));
        let share = ok.count() as f64 / (cfg.reps - s.failures) as f64;
        println!(
            "{:<8} {:>7.3} {:>9.3} {:>8.3} {:>8.2}",
            s.names[j], s.truth[j], s.mean_abs_bias[j], s.mean_se[j], share
        );
    }
    println!("DP(1|A): true {:.4}, mean estimate {:.4}", s.dp1_truth, s.dp1_mean.unwrap_or(f64::NAN));
    Ok(())
}
