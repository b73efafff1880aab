//! Compares the full simulation with the reduced loops that replace training
//! by equilibrium sampling or by the closed-form effective fitness.
//!
//!     cargo run --release --example reduced_dynamics

use twoscale::driver::{run, FitnessMode, RunConfig};
use twoscale::metrics::{bl_distance_subsampled, EmpiricalMeasure};
use twoscale::rng::{stream, LANE_SUBSAMPLE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = RunConfig {
        n: 2000,
        generations: 10,
        snapshot_every: 0,
        ..RunConfig::quadratic()
    };
    let reduced = run(&RunConfig {
        fitness_mode: FitnessMode::EquilibriumSample,
        seed: 100,
        ..base.clone()
    })?;
    let closed = run(&RunConfig {
        fitness_mode: FitnessMode::ClosedForm,
        ..base.clone()
    })?;
    let reference = EmpiricalMeasure::from_1d(&reduced.h_marginal(0))?;
    println!("reduced run: {:.3}s, closed form: {:.3}s", reduced.wall_time_secs, closed.wall_time_secs);
    for k in [20, 50, 100] {
        let full = run(&RunConfig {
            inner_steps: k,
            ..base.clone()
        })?;
        let m = EmpiricalMeasure::from_1d(&full.h_marginal(0))?;
        let d = bl_distance_subsampled(&reference, &m, 1000, &mut stream(0, LANE_SUBSAMPLE, k as u64))?;
        println!("inner steps {k:>3}: distance to the reduced run {d:.4} ({:.2}s)", full.wall_time_secs);
    }
    Ok(())
}
