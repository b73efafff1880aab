//! The jump operator at weak selection against the replicator–mutator
//! equation, then a short replicator–mutator run.
//!
//!     cargo run --release --example replicator_mutator

use twoscale::meanfield::{evolve, replicator_consistency, DensityGrid, PdeConfig, Scheme};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = DensityGrid::from_density(vec![-3.0], vec![3.0], vec![600], |h: &[f64]| {
        (-2.0 * h[0] * h[0]).exp()
    })?;
    let cfg = PdeConfig::new(|h: &[f64]| -(h[0] - 0.5).powi(2))
        .sigma(0.5)
        .dt(2e-4)
        .scheme(Scheme::ReplicatorMutator);
    for nu in [0.1, 0.05, 0.025, 0.0125] {
        println!("nu {nu:<7} residual {:.5}", replicator_consistency(&grid, &cfg, nu)?);
    }
    let (_, records) = evolve(&grid, &cfg, 5000, 1000)?;
    for r in &records {
        println!("t = {:.2}: mean {:+.4}", r.time, r.mean[0]);
    }
    Ok(())
}
