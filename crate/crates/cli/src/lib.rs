//! `qdyn` command-line runner: config-driven training, classification,
//! stability analysis, flow fields, ensemble sampling, sweeps and
//! restricted-Haar validation.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 inconclusive
//! scientific result, 3 numerical abort.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ConfigError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_INCONCLUSIVE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "qdyn", version, about = "Gradient-descent dynamics of parameterized quantum circuits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one configuration and classify its late-time dynamics.
    Train(TrainArgs),
    /// Re-classify a trace directory written by `train`.
    Classify(ClassifyArgs),
    /// Fixed-point stability from a trace directory or explicit charges.
    Stability(StabilityArgs),
    /// Sample the two-datum reduced flow on a grid (CSV).
    Flowfield(FlowArgs),
    /// Monte-Carlo frame potential of the Haar / restricted-Haar ensemble.
    Ensemble(EnsembleArgs),
    /// Run a grid of configurations and aggregate late-time quantities.
    Sweep(RunArgs),
    /// Compare state-preparation runs with restricted-Haar averages.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Seed for structure, data and initialisation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of gradient-descent steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Parallel runs (default: available hardware parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    /// Directory containing `config.json` and `trace.csv`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Write `report.json` and a manifest here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    /// Trace directory; charges and λ come from its final record.
    #[arg(long, conflicts_with = "charges")]
    pub trace: Option<PathBuf>,
    /// Comma-separated charges `C_β`.
    #[arg(long, allow_hyphen_values = true)]
    pub charges: Option<String>,
    /// Trace directory whose final λ is used with `--charges` (default: decoupled λ).
    #[arg(long)]
    pub lambda: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    /// Two comma-separated charges.
    #[arg(long, allow_hyphen_values = true)]
    pub charges: String,
    /// Trace directory supplying λ (default: decoupled λ).
    #[arg(long)]
    pub lambda: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    /// `lo,hi,points` in `g = √K` for both axes.
    #[arg(long, default_value = "0,3,31")]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EnsembleArgs {
    /// Optional file with an `[ensemble]` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hilbert-space dimension `d`.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of pinned data `N` (0 samples the Haar ensemble).
    #[arg(long)]
    pub n_data: Option<usize>,
    /// Frame-potential order `k`.
    #[arg(long)]
    pub order: Option<u32>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, mapped onto an exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Input(_) => EXIT_CONFIG,
            Self::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Input(m) => write!(f, "{m}"),
            Self::Numerical(m) => write!(f, "numerical abort: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<qdyn::Error> for CliError {
    fn from(e: qdyn::Error) -> Self {
        match e {
            qdyn::Error::NumericalAbort { .. } => Self::Numerical(e.to_string()),
            other => Self::Input(other.to_string()),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
