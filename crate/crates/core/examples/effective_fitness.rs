//! Effective fitness on the quadratic benchmark: closed form, Monte Carlo,
//! time average along a trajectory, and the Gibbs version as beta grows.
//!
//!     cargo run --release --example effective_fitness

use twoscale::dynamics::{train_inner, LangevinConfig};
use twoscale::fitness::{
    fbar_closed, fbar_gibbs_beta, fbar_monte_carlo, penalized_fitness, time_avg_fitness, FitnessHistory,
};
use twoscale::objective::{Objective, Quadratic};
use twoscale::rng::stream;
use twoscale::types::Agent;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let obj = Quadratic;
    let h = [0.3, 0.8];
    let closed = fbar_closed(&obj, &h)?;
    let mc = fbar_monte_carlo(&obj, &h, 200_000, &mut stream(1, 0, 0))?;
    println!("closed {:.5}, monte carlo {:.5} +- {:.5}", closed.value, mc.value, mc.std_error);

    // F at the end of each of 200 blocks of 50 steps
    let mut agent = Agent::new(0, vec![0.0, 0.0], h.to_vec());
    let mut history = FitnessHistory::new(200)?;
    let mut rng = stream(2, 0, 0);
    for block in 0..200 {
        train_inner(&mut agent, &obj, &LangevinConfig::default(), 50, &mut rng)?;
        history.push(block, obj.fitness(&agent.theta, &h));
    }
    println!("time average of F over 200 blocks {:.5}", time_avg_fitness(&history)?);

    let theta_star = obj.minimizer(&h).expect("closed-form minimizer");
    let f_star = obj.fitness(&theta_star, &h);
    for beta in [1.0, 4.0, 16.0, 64.0, 256.0] {
        let g = fbar_gibbs_beta(&obj, &h, beta)?;
        println!("beta {beta:>5}: gibbs {g:.5}, |gap| {:.5}", (g - f_star).abs());
    }
    let off = [theta_star[0] + 0.1, theta_star[1]];
    println!("penalized fitness at an offset point, beta = 10: {:.4}", penalized_fitness(&obj, &off, &h, 10.0)?);
    Ok(())
}
