//! `taes run | oracle | feasibility`
//!
//! Exit codes: 0 success, 1 oracle check failed, 2 config error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taes::harness::{estimate_models, feasibility_report, oracle_report, run_experiment, ExperimentConfig};
use taes::Error;

#[derive(Parser)]
#[command(name = "taes", version, about = "Emotion-driven activity selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write timeline.csv and summary.json.
    Run {
        config: PathBuf,
        /// Output directory. Overrides TAES_OUT_DIR and the config.
        #[arg(long, env = "TAES_OUT_DIR")]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the solver with the lattice oracle on estimated experience.
    Oracle {
        config: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Simulated episodes per activity used to estimate experience.
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
    },
    /// Report whether the character is reachable by mixing activities.
    Feasibility {
        config: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let dir = out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| PathBuf::from("taes-out"));
            let summary = run_experiment(&cfg, &dir)?;
            print_json(&summary);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            config,
            resolution,
            tolerance,
            episodes,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let models = estimate_models(&cfg, episodes)?;
            let report = oracle_report(&cfg.character()?, &models, &cfg.solver, resolution, tolerance)?;
            print_json(&report);
            Ok(if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Feasibility { config, episodes } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let models = estimate_models(&cfg, episodes)?;
            print_json(&feasibility_report(&cfg.character()?, &models, &cfg.solver)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
