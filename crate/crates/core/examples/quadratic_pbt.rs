//! Full PBT on the quadratic benchmark. Prints the fitness quantiles before
//! and after each selection round and the final hyperparameter means.
//!
//!     cargo run --release --example quadratic_pbt

use twoscale::driver::{run_pbt, RunConfig};
use twoscale::record::Phase;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig {
        generations: 30,
        ..RunConfig::quadratic()
    };
    let out = run_pbt(&cfg)?;
    for r in out.records.iter().filter(|r| r.phase != Phase::Training) {
        println!(
            "gen {:>3} {:<9} q10 {:+.3}  median {:+.3}  q90 {:+.3}  mean h = ({:+.3}, {:.3})",
            r.generation,
            r.phase.as_str(),
            r.fitness_q10,
            r.fitness_median,
            r.fitness_q90,
            r.mean_h[0],
            r.mean_h[1]
        );
    }
    println!("{} agents in {:.2}s", out.population.len(), out.wall_time_secs);
    Ok(())
}
