//! PBT over DQN agents on CartPole: top-5 and population mean reward per
//! generation, and the final hyperparameters.
//!
//!     cargo run --release --example cartpole_pbt

use twoscale::cartpole::pbt::{run_cartpole_pbt, CartpoleConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CartpoleConfig {
        generations: 15,
        ..CartpoleConfig::default()
    };
    let run = run_cartpole_pbt(&cfg)?;
    for r in &run.records[1..] {
        println!(
            "gen {:>2}: top5 {:>6.1}, population {:>6.1}, lr {:.1e}, p_decay {:>6.0}, batch {:>5.1}",
            r.generation,
            r.top5_mean_reward.unwrap_or(f64::NAN),
            r.pop_mean_reward.unwrap_or(f64::NAN),
            r.hyper_mean[0],
            r.hyper_mean[1],
            r.hyper_mean[2]
        );
    }
    println!("first generation with top5 >= 95: {:?}", run.first_generation_reaching(95.0));
    Ok(())
}
