//! Downgrade and default probabilities for an A-rated firm.
//!
//! cargo run --release --example risk_measures

use stochmig::design::{Design, DesignSpec};
use stochmig::risk::{risk_measures, RiskConfig, DEFAULT_HORIZONS};

fn main() -> stochmig::error::Result<()> {
    println!("design  rho    DP1    DP2   PD1   PD12   PD24   PD36   (%)");
    for design in [Design::Two, Design::Three] {
        for rho in [0.0, 0.4, 0.7] {
            let theta = DesignSpec::new(design, rho).params()?;
            let m = risk_measures(&theta, &DEFAULT_HORIZONS, &RiskConfig::default())?;
            let pd: Vec<String> = m.pd.iter().map(|(_, p)| format!("{:6.2}", 100.0 * p)).collect();
            println!("{:>6}  {rho:.1}  {:5.2}  {:5.2} {}", design.id(), 100.0 * m.dp1, 100.0 * m.dp2, pd.join(" "));
        }
    }
    Ok(())
}
