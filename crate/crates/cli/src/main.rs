//! `nowcast`: compress, complete, backtest, detect arbitrage in, and
//! report on daily curve/surface data.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing configuration; exit code 2.
    Config(String),
    /// Failure during computation or IO after validation; exit code 3.
    Runtime(String),
}

impl From<nowcast_core::CoreError> for CliError {
    fn from(e: nowcast_core::CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "nowcast",
    about = "Factor-model nowcasting of financial curves and surfaces",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "nowcast.toml")]
    config: PathBuf,
    /// Overrides train.seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides output.dir from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trained model file (commands that consume one).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Mask override: fraction:0.25, uniform:40, less_correlated:8 or
    /// nodes:file.csv.
    #[arg(long, global = true)]
    mask: Option<String>,
    /// Outlier threshold override for detect.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Number of exogenous columns in the dataset (overrides the config).
    #[arg(long, global = true)]
    exogenous: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the calibration block and write it out.
    Compress,
    /// Calibrate codes day by day and decode full surfaces.
    Complete,
    /// Mask each test day, predict the hidden points, score everything.
    Backtest,
    /// Score days by reconstruction error and write corrected surfaces.
    Detect,
    /// Summarize the artifacts in the output directory.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let loaded = config::load_config(
        &cli.config,
        cli.seed,
        cli.out.as_deref(),
        cli.mask.as_deref(),
        cli.threshold,
        cli.exogenous,
    );
    let result = loaded.and_then(|(cfg, seed)| match cli.command {
        Command::Compress => commands::compress(&cfg, seed),
        Command::Complete => commands::complete(&cfg, seed, cli.model.as_deref()),
        Command::Backtest => commands::backtest(&cfg, seed, cli.model.as_deref()),
        Command::Detect => commands::detect(&cfg, seed, cli.model.as_deref()),
        Command::Report => commands::report(&cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
