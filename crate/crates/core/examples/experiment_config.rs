//! Loads an experiment from TOML text and runs it without writing files.
//!
//!     cargo run --release --example experiment_config

use twoscale::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
experiment = "penalization_rate"
seeds = [3]

[params]
betas = [1.0, 10.0, 100.0]
mc_samples = 100000
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let summary = run_experiment(&cfg, None)?;
    for c in &summary.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{}", serde_json::to_string_pretty(&summary.findings)?);
    Ok(())
}
