//! Command-line experiment runner: configuration, orchestration of the
//! simulator, HEOM, TTM and calibration stages, CSV/manifest output and SVG
//! plots.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dimerlab_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dimerlab",
    version,
    about = "Open-system dynamics of an excitonic dimer"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file; defaults are used for absent keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (for `plot`, an `.svg` path or a directory).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `section.key=value`, applied after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Noiseless circuit against the closed-form Rabi population.
    Closed,
    /// Dissipative circuit run with the full post-processing chain.
    Noisy,
    /// HEOM reference dynamics.
    Heom,
    /// Fit HEOM (λ, J) to a post-processed circuit trace.
    FitHeom,
    /// Sweep δ_Q, fit HEOM at each point and fit λ_H(δ_Q) with a line.
    CalibLine,
    /// Train transfer tensors on a short window and extend the dynamics.
    TtmExtend,
    /// Bloch vector under repeated identity sequences on one qubit.
    IdentityScan,
    /// Line plot of one column from one or more CSV files.
    Plot {
        files: Vec<PathBuf>,
        /// Column to draw; defaults to `p1_raw`, else the second column.
        #[arg(long)]
        column: Option<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Closed => "closed",
            Command::Noisy => "noisy",
            Command::Heom => "heom",
            Command::FitHeom => "fit-heom",
            Command::CalibLine => "calib-line",
            Command::TtmExtend => "ttm-extend",
            Command::IdentityScan => "identity-scan",
            Command::Plot { .. } => "plot",
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("DIMERLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            CliError::Config(format!(
                "DIMERLAB_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    if let Command::Plot { files, column } = &cli.command {
        return plot::plot_command(files, column.as_deref(), &cli.out);
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    commands::run_command(&cli.command, &cfg, &cli.out)
}
