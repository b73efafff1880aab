use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twoscale::error::Error;
use twoscale::experiment::{run_experiment, ExperimentConfig, ExperimentId};

#[derive(Parser)]
#[command(name = "twoscale", version, about = "Run population-based training experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSVs plus summary.json.
    Run {
        config: PathBuf,
        /// Output directory (overrides `out_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list (overrides `seeds` in the config).
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// List the experiment ids.
    ListExperiments,
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::ListExperiments => {
            for id in ExperimentId::ALL {
                println!("{:<22} {}", id.as_str(), id.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("{}: ok ({}, seeds {:?})", config.display(), cfg.experiment.as_str(), cfg.seeds);
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out, seeds } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(s) = seeds {
                cfg.seeds = s;
                if let Err(e) = cfg.validate() {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            let out_dir = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.as_str()));
            match run_experiment(&cfg, Some(&out_dir)) {
                Ok(summary) => {
                    for c in &summary.checks {
                        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                    }
                    println!("wrote {} ({:.1}s)", out_dir.display(), summary.wall_time_secs);
                    if summary.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e @ Error::Config(_)) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
