//! `sagnac`: simulate, calibrate and analyse a photon-counting Sagnac
//! gyroscope from the command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or fit
//! error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sagnac_core::Error;

#[derive(Debug, Parser)]
#[command(name = "sagnac", version, about = "Photon-counting Sagnac gyroscope toolkit")]
struct Cli {
    /// TOML experiment configuration; prototype values when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `run.seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Print failures as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the Fisher information F(τ).
    Fisher(FisherArgs),
    /// Simulate a fixed-set-point photon-counting run.
    Simulate(SimulateArgs),
    /// Fringe fits, α and the linear contrast calibration.
    Calibrate(CalibrateArgs),
    /// Convert counts to delays with a calibration.
    Estimate(EstimateArgs),
    /// Allan analysis, detection limits and Cramér–Rao overlay.
    Stability(StabilityArgs),
}

#[derive(Debug, Args)]
struct FisherArgs {
    /// First delay, s (just above zero by default).
    #[arg(long, default_value_t = 1e-18)]
    tau_min: f64,
    #[arg(long, default_value_t = 5000e-15)]
    tau_max: f64,
    #[arg(long, default_value_t = 5001)]
    n_points: usize,
    #[arg(long, default_value = "fisher.csv")]
    output: String,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value = "counts.csv")]
    output: String,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Bright-scan CSV (v0_v,power1_w[,power2_w]).
    #[arg(long, conflicts_with = "simulate_bright", required_unless_present = "simulate_bright")]
    bright: Option<PathBuf>,
    /// Simulate the bright scan from the configuration instead.
    #[arg(long)]
    simulate_bright: bool,
    /// Calibration-staircase counts CSV (v0_v,t_s,c1,c2).
    #[arg(long, conflicts_with = "simulate_staircase", required_unless_present = "simulate_staircase")]
    staircase: Option<PathBuf>,
    /// Simulate the staircase from the configuration instead.
    #[arg(long)]
    simulate_staircase: bool,
    #[arg(long, default_value = "calibration.json")]
    output: String,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long, default_value = "delays.csv")]
    output: String,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[arg(long)]
    delays: PathBuf,
    /// Prefix of the Allan CSV, report JSON and smoothed-delay CSV.
    #[arg(long, default_value = "stability")]
    prefix: String,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::Domain(_) | Error::Config(_) | Error::ModelParameter(_)) => 2,
            CliError::Core(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                Error::ModelParameter(_) => "model-parameter",
                Error::Domain(_) => "domain",
                Error::OracleAccuracy(_) => "oracle-accuracy",
                Error::Fit(_) => "fit",
                Error::DegenerateBin(_) => "degenerate-bin",
                Error::Config(_) => "config",
                Error::Data { .. } => "data",
                Error::Io { .. } => "io",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json_errors {
                let body = serde_json::json!({
                    "error": { "kind": e.kind(), "message": e.message(), "exit_code": e.exit_code() }
                });
                eprintln!("{body}");
            } else {
                eprintln!("sagnac: {}", e.message());
            }
            ExitCode::from(e.exit_code())
        }
    }
}
