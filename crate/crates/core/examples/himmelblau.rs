//! PBT on the Himmelblau function: the population collapses onto one of the
//! four minima.
//!
//!     cargo run --release --example himmelblau

use twoscale::driver::{run_pbt, RunConfig};
use twoscale::experiment::basin_fractions;
use twoscale::objective::HIMMELBLAU_MINIMA;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig {
        n: 2000,
        generations: 200,
        snapshot_every: 0,
        ..RunConfig::himmelblau()
    };
    let out = run_pbt(&cfg)?;
    let pts = out.theta_points();
    let (near, basin) = basin_fractions(&pts, 0.7);
    for m in HIMMELBLAU_MINIMA {
        let count = pts
            .iter()
            .filter(|p| ((p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)).sqrt() <= 0.7)
            .count();
        println!("minimum ({:+.3}, {:+.3}): {count} agents", m[0], m[1]);
    }
    println!("near a minimum {near:.3}, largest basin {basin:.3}");
    Ok(())
}
