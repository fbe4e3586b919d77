//! Command-line entry point: `search`, `predict`, and `synth` subcommands.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autopv::config::RunConfig;
use autopv::runner::{run_predict, run_search};
use autopv::synth::synth_pv;

#[derive(Parser)]
#[command(name = "autopv", about = "Architecture search for PV power forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured architecture search and write its artifacts.
    Search {
        /// Plain `key = value` run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Worker threads for candidate evaluation (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Continue from the evaluation log of an interrupted run.
        #[arg(long)]
        resume: bool,
    },
    /// Forecast with a searched architecture and saved weights.
    Predict {
        /// `best_arch.json` produced by a search run.
        #[arg(long)]
        arch: PathBuf,
        /// `weights.bin` produced by a search run.
        #[arg(long)]
        weights: PathBuf,
        /// Hourly CSV with the schema recorded in the architecture.
        #[arg(long)]
        data: PathBuf,
        /// Forecast horizon; must match the architecture.
        #[arg(long)]
        horizon: usize,
        /// Directory for forecast.csv / forecast.svg.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic hourly PV dataset.
    Synth {
        #[arg(long)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Search {
            config,
            workers,
            resume,
        } => {
            let cfg = RunConfig::from_file(&config).map_err(|e| e.to_string())?;
            let summary = run_search(&cfg, workers, resume).map_err(|e| e.to_string())?;
            println!(
                "search finished: {} evaluations, {} trainings, front size {}, best error {}",
                summary.outcome.records.len(),
                summary.trainer_calls,
                summary.outcome.front.len(),
                summary.best.measured_error,
            );
            println!("artifacts written to {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Predict {
            arch,
            weights,
            data,
            horizon,
            out,
        } => {
            let summary =
                run_predict(&arch, &weights, &data, horizon, &out).map_err(|e| e.to_string())?;
            println!(
                "forecast over {} windows, MAE {}; outputs in {}",
                summary.windows,
                summary.mae,
                out.display(),
            );
            Ok(())
        }
        Command::Synth { days, seed, out } => {
            let frame = synth_pv(days, seed);
            frame.write_csv(&out).map_err(|e| e.to_string())?;
            println!("wrote {} hourly rows to {}", frame.n_rows(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
