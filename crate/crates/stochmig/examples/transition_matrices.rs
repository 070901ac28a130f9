//! Expected one-month matrix, its stationary law, and the two-month
//! matrix against the square of the one-month matrix.
//!
//! cargo run --example transition_matrices

use stochmig::design::{Design, DesignSpec};
use stochmig::kernel::{expected_matrix, horizon2_matrix, stationary_distribution, Integration, Matrix};

fn show(title: &str, m: &Matrix) {
    println!("{title} (rows = origin, %)");
    for l in 0..m.ncols() {
        let row: Vec<String> = (0..m.nrows()).map(|k| format!("{:6.2}", 100.0 * m[(k, l)])).collect();
        println!("  {}: {}", l + 1, row.join(" "));
    }
}

fn main() -> stochmig::error::Result<()> {
    let theta = DesignSpec::new(Design::Three, 0.4).params()?;
    let p = expected_matrix(&theta, true);
    show("P^a", &p);

    let pi = stationary_distribution(&p)?;
    println!("stationary: {:?}", pi.iter().map(|x| (x * 1e4).round() / 100.0).collect::<Vec<_>>());

    let p2 = horizon2_matrix(&theta, Integration::GaussHermite(64), true)?;
    show("P^a(2)", &p2);
    let sq = &p * &p;
    println!("max |P^a(2) - (P^a)^2| = {:.4} pp", 100.0 * (&p2 - &sq).amax());

    // the gap closes when the factor is serially independent
    let iid = DesignSpec::new(Design::Three, 0.0).params()?;
    let p1 = expected_matrix(&iid, true);
    let gap = (horizon2_matrix(&iid, Integration::GaussHermite(64), true)? - &p1 * &p1).amax();
    println!("rho = 0: max gap {gap:.2e}");
    Ok(())
}
