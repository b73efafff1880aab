//! Langevin training at fixed hyperparameters: the parameter variance
//! approaches the stationary value h1^2 / 4 of the quadratic benchmark.
//!
//!     cargo run --release --example langevin

use twoscale::dynamics::{train_inner, LangevinConfig, NoiseMode};
use twoscale::numeric::mean_var;
use twoscale::objective::Quadratic;
use twoscale::rng::stream;
use twoscale::types::Agent;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = vec![0.2, 0.6];
    let cfg = LangevinConfig {
        dt: 0.01,
        noise: NoiseMode::Direct { index: 1 },
    };
    let mut agents: Vec<Agent> = (0..2000).map(|i| Agent::new(i, vec![1.0, -1.0], h.clone())).collect();
    for block in 1..=5 {
        for a in agents.iter_mut() {
            train_inner(a, &Quadratic, &cfg, 100, &mut stream(0, a.id as u64, block))?;
        }
        let xs: Vec<f64> = agents.iter().map(|a| a.theta[0]).collect();
        let (m, v) = mean_var(&xs);
        println!("t = {:.0}: mean {m:+.4}, variance {v:.4} (stationary {:.4})", block as f64, h[1] * h[1] / 4.0);
    }
    Ok(())
}
