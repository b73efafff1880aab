//! One genetic update under each selection rule on a toy population whose
//! fitness is its first hyperparameter.
//!
//!     cargo run --release --example selection_rules

use twoscale::evolution::{genetic_update, selection_weights, MutationConfig, SelectionRule};
use twoscale::rng::stream;
use twoscale::types::{Agent, SearchBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mutation = MutationConfig {
        sigma: 0.05,
        bounds: Some(SearchBox::cube(1, 0.0, 1.0)?),
        scale_to_unit: false,
    };
    let rules = [
        SelectionRule::Softmax { alpha: 10.0 },
        SelectionRule::Truncation { fraction: 0.2 },
        SelectionRule::WorstReplacement { alpha: 10.0 },
    ];
    for rule in rules {
        let mut pop: Vec<Agent> = (0..10).map(|i| Agent::new(i, vec![], vec![i as f64 / 9.0])).collect();
        let fitness: Vec<f64> = pop.iter().map(|a| a.h[0]).collect();
        let weights = selection_weights(&fitness, &rule)?;
        let replaced = genetic_update(&mut pop, &fitness, &rule, &mutation, 1.0, &mut stream(3, 0, 0))?;
        let hs: Vec<String> = pop.iter().map(|a| format!("{:.2}", a.h[0])).collect();
        println!("{rule:?}");
        println!("  weights of the best and worst: {:.3} / {:.3}", weights[9], weights[0]);
        println!("  {} slots overwritten, h0 now [{}]", replaced.len(), hs.join(" "));
    }
    Ok(())
}
