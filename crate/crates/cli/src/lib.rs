//! Batch front end: simulate plants, check and design from recorded data,
//! monitor residuals, and rerun the five-state benchmark end to end.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddfdi_core::example1::FaultProfile;

pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ddfdi", version, about = "Dead-beat unknown-input observers designed from data, with fault identification")]
pub struct Cli {
    /// Experiment configuration (TOML, `version = 1`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Relative singular-value cut for rank decisions.
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,

    /// Absolute threshold for "numerically zero".
    #[arg(long, global = true)]
    pub tol_zero: Option<f64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a seeded experiment and write a trace CSV.
    Simulate(SimulateArgs),
    /// Test the data-based solvability conditions on a fault-free trace.
    Check(CheckArgs),
    /// Compute a dead-beat residual generator from a fault-free trace.
    Design(DesignArgs),
    /// Detect and reconstruct faults from a trace or a residual record.
    Identify(IdentifyArgs),
    /// Run collect, check, design and identify on the built-in benchmark plant.
    ReproduceExample(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plant matrix bundle (A, B, C, E). Defaults to the config's
    /// `system.file`, then to the built-in benchmark plant.
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Trace CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Fault-free trace CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Disturbance dimension; estimated from the data when absent.
    #[arg(long)]
    pub r: Option<usize>,
    /// Machine-readable JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub r: Option<usize>,
    /// Residual generator bundle to write (A_uio, B_u, B_y, D_uio, C).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Bundle of intermediate matrices (compression blocks, T1, T3, T4, L).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// True plant, for reporting the design constraints against it.
    #[arg(long)]
    pub system: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    PaperMax,
    SaturatingMin,
}

impl From<ProfileArg> for FaultProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::PaperMax => FaultProfile::PaperMax,
            ProfileArg::SaturatingMin => FaultProfile::SaturatingMin,
        }
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["trace", "residuals", "scenario"]))]
pub struct IdentifyArgs {
    /// Residual generator bundle. Defaults to the published benchmark
    /// generator with `--scenario`.
    #[arg(long)]
    pub uio: Option<PathBuf>,
    /// Trace CSV; residuals are generated from its `u` and `y` columns.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Residual CSV (`k,r_0,...`).
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    /// Benchmark scenario preset: a, b, c or d.
    #[arg(long, value_parser = ["a", "b", "c", "d"])]
    pub scenario: Option<String>,
    #[arg(long, value_enum, default_value = "paper-max")]
    pub profile: ProfileArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Detection threshold on |r(k)|.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// First time at which detection and estimation run. Defaults to the
    /// scenario's value, then to the nilpotency index of A_uio.
    #[arg(long)]
    pub k_id: Option<usize>,
    /// Length of the least-squares window evaluated at detection.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    /// Fault trace CSV to write.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Plot data (`k f fhat`) to write.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "paper-max")]
    pub profile: ProfileArg,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Replace C by zeros before collecting data.
    #[arg(long)]
    pub zero_output: bool,
    /// Directory for the summary, plot data and matrix bundles.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, and returns the exit
/// code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::SCHEMA } else { exit::SUCCESS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match commands::dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
