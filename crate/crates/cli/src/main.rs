//! Experiment driver for the constellation-shaping toolkit.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "shaper-cli",
    version,
    about = "NLIN calibration, constellation shaping runs and split-step evaluation sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the NLIN chi coefficients from split-step probe runs.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the jointly shaped constellation at one launch power.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Total dual-polarization launch power, dBm.
        #[arg(long)]
        power_dbm: f64,
        /// Calibration file (defaults to <out>/calibration.json).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Full power sweep: train per power, build baselines, evaluate through
    /// the NLIN model and the split-step solver.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Calibration file (defaults to <out>/calibration.json).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
    /// Evaluate a constellation file through the split-step pipeline.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Constellation JSON file.
        #[arg(long)]
        constellation: PathBuf,
        /// Total dual-polarization launch power, dBm.
        #[arg(long)]
        power_dbm: f64,
    },
    /// Build a Maxwell-Boltzmann-shaped QAM baseline.
    MbBaseline {
        #[command(flatten)]
        common: CommonArgs,
        /// Use this lambda directly.
        #[arg(long)]
        lambda: Option<f64>,
        /// Find the lambda with this source entropy (bits).
        #[arg(long)]
        entropy_bits: Option<f64>,
        /// Optimize lambda for MI on the NLIN model at this power (dBm);
        /// requires a calibration file.
        #[arg(long)]
        power_dbm: Option<f64>,
        /// Calibration file (defaults to <out>/calibration.json).
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Calibrate { common } => {
            let config = ExperimentConfig::load(&common.config)?;
            commands::cmd_calibrate(&config, common.seed, &common.out)
        }
        Command::Train {
            common,
            power_dbm,
            calibration,
        } => {
            let config = ExperimentConfig::load(&common.config)?;
            commands::cmd_train(
                &config,
                common.seed,
                &common.out,
                power_dbm,
                calibration.as_ref(),
            )
        }
        Command::Sweep { common, calibration } => {
            let config = ExperimentConfig::load(&common.config)?;
            commands::cmd_sweep(&config, common.seed, &common.out, calibration.as_ref())
        }
        Command::Evaluate {
            common,
            constellation,
            power_dbm,
        } => {
            let config = ExperimentConfig::load(&common.config)?;
            commands::cmd_evaluate(&config, common.seed, &common.out, &constellation, power_dbm)
        }
        Command::MbBaseline {
            common,
            lambda,
            entropy_bits,
            power_dbm,
            calibration,
        } => {
            let config = ExperimentConfig::load(&common.config)?;
            commands::cmd_mb_baseline(
                &config,
                common.seed,
                &common.out,
                lambda,
                entropy_bits,
                power_dbm,
                calibration.as_ref(),
            )
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
