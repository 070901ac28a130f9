//! Simulate a panel, tally migrations and look at one firm's latent score.
//!
//! cargo run --example simulate_panel

use stochmig::design::{Design, DesignSpec};
use stochmig::likelihood::{build_counts, TwoStepMode};
use stochmig::simulate::{simulate_panel, stability_series, InitialRating};

fn main() -> stochmig::error::Result<()> {
    let theta = DesignSpec::new(Design::One, 0.4).params()?;
    let panel = simulate_panel(&theta, 1000, 60, &InitialRating::StationaryNoDefault, 7, true)?;

    let mut occupancy = vec![0usize; theta.k_states];
    for i in 0..panel.n_firms {
        occupancy[panel.rating(i, panel.t_len - 1)] += 1;
    }
    println!("ratings at the last date: {occupancy:?}");

    let counts = build_counts(&panel, TwoStepMode::Direct)?;
    let moves: f64 = counts.n1.iter().sum();
    let stay: f64 = (0..theta.k_states).map(|k| counts.n1[(k, k)]).sum();
    println!("{moves} one-step moves, {:.1}% unchanged", 100.0 * stay / moves);
    println!("defaults: {}", counts.n1.row(theta.k_states - 1).sum());

    let f = &panel.factor.as_ref().expect("simulated panels carry the factor").f;
    println!("factor, first dates: {:?}", f[..5].iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());

    let s = stability_series(&panel, &theta, 0)?;
    println!("firm 0 rating path: {:?}", panel.firm(0).iter().map(|r| r + 1).collect::<Vec<_>>());
    println!("firm 0 stability, first moves: {:?}", s[..5].iter().map(|x| (x * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    Ok(())
}
