//! A single DQN agent on CartPole with fixed hyperparameters.
//!
//!     cargo run --release --example cartpole_dqn

use twoscale::cartpole::pbt::{CartpoleConfig, DqnAgent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CartpoleConfig::default();
    let mut agent = DqnAgent::new(0, &cfg)?;
    agent.hyper = vec![1e-3, 1000.0, 64.0];
    for round in 1..=20 {
        let episodes = agent.train(500, round, &cfg)?;
        let mean = episodes.iter().sum::<f64>() / episodes.len().max(1) as f64;
        println!(
            "after {:>5} steps: {} episodes, mean reward {mean:.1}, learner steps {}",
            agent.total_steps,
            episodes.len(),
            agent.learner_steps
        );
    }
    Ok(())
}
