//! `qgbc`: experiment driver for graybox noise modelling and pulse control.
//!
//! Exit status: 0 on success, 2 on configuration or usage errors, 3 on
//! numerical failures, 1 otherwise.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qgbc::Error),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(qgbc::Error::Config(_)) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "qgbc", version, about = "Graybox noise modelling and pulse control for a dephased qubit")]
pub struct Cli {
    /// TOML config, a JSON artifact embedding one, or `default`.
    #[arg(long, global = true, default_value = "default")]
    pub config: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Free-evolution coherence versus coupling: Monte Carlo and Dyson orders 2 and 4 (CSV).
    CoherenceScan {
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Largest g/γ scanned.
        #[arg(long, default_value_t = 30.0)]
        max_ratio: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak/intermediate/strong/ultra-strong coupling boundaries (JSON).
    Regimes {
        #[arg(long, default_value_t = 40.0)]
        max_ratio: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical noise correlators against their analytic forms (JSON).
    CorrelatorCheck {
        #[arg(long, default_value_t = 10_000)]
        trajectories: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random-pulse training data as JSON Lines.
    Dataset {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a graybox model on a dataset and writes a checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-record MSE statistics of a checkpoint on a dataset (JSON).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimizes pulses for one gate on one model (JSON report).
    Optimize {
        #[arg(long)]
        gate: String,
        /// cs-wb, os-wb or gb.
        #[arg(long, default_value = "cs-wb")]
        model_kind: String,
        /// Graybox checkpoint, required for `gb`.
        #[arg(long)]
        graybox: Option<PathBuf>,
        /// Coupling used for scoring (and for `os-wb`); defaults to the config.
        #[arg(long)]
        g_over_gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Process tomography of a pulse sequence under the configured noise (JSON).
    Tomo {
        #[arg(long, default_value = "I")]
        gate: String,
        /// Optimization report whose best pulses are used; zero pulses otherwise.
        #[arg(long)]
        pulses: Option<PathBuf>,
        #[arg(long)]
        g_over_gamma: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate fidelity versus coupling for the six standard gates (CSV).
    Fig3 {
        #[arg(long, value_delimiter = ',', default_value = "I,X,Y,Z,H,Rx(pi/4)")]
        gates: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1.8,3.6,7.2,14.4,28.8")]
        g_over_gamma: Vec<f64>,
        /// Also optimize on the second-order open-system model.
        #[arg(long)]
        open_system: bool,
        /// Graybox checkpoints; each is used at the coupling it was trained for.
        #[arg(long)]
        graybox: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Haar-random targets: graybox versus closed-system control (CSV).
    Fig4 {
        #[arg(long)]
        graybox: PathBuf,
        #[arg(long, default_value_t = 50)]
        targets: usize,
        #[arg(long, default_value_t = 0)]
        target_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
