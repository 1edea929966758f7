//! `layerdp` command-line front end.
//!
//! Exit codes: 0 success, 2 malformed input, 3 constraint violation,
//! 4 capacity exceeded.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Core(layerdp::Error),
    Usage(String),
    Violation(String),
}

impl From<layerdp::Error> for CliError {
    fn from(e: layerdp::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn code(&self) -> u8 {
        use layerdp::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Violation(_) => 3,
            CliError::Core(e) => match e {
                E::Capacity(_) => 4,
                E::Membership(_) | E::MigrationRefused(_) | E::NotConvergent(_) | E::Refused(_) => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Violation(m) => f.write_str(m),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "layerdp", version, about = "Build, audit and compare layered DP mechanisms")]
pub struct Cli {
    /// Flat key=value file supplying defaults for flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate space files.
    #[command(subcommand)]
    Space(SpaceCmd),
    /// Build or verify mechanism files.
    #[command(subcommand)]
    Mech(MechCmd),
    /// Expected distortion per dataset as CSV.
    Utility(UtilityArgs),
    /// Ratio of our expected distortion to a baseline over a parameter grid.
    Compare(CompareArgs),
    /// Draw seeded samples.
    Sample(SampleArgs),
}

#[derive(Subcommand, Debug)]
pub enum SpaceCmd {
    /// Enumerate graph classes and the flip metric.
    Graphs {
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and dump the layers of a linear-query spec.
    Linear {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Layers to include in the dump (default: up to the periodic tail).
        #[arg(long)]
        layers: Option<usize>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Purest,
    Atomic,
    Delta,
    Approx,
}

#[derive(Subcommand, Debug)]
pub enum MechCmd {
    Build(BuildArgs),
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, value_enum)]
    pub kind: Kind,
    /// Radius for `delta`.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Layer-0 value for every dataset with `atomic` (default: smallest support value).
    #[arg(long)]
    pub value: Option<f64>,
    /// Rounding step of the approximating query for `approx`.
    #[arg(long)]
    pub round: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub mech: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct UtilityArgs {
    #[arg(long)]
    pub mech: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub eps: Option<f64>,
    /// `uniform` or `point:<id>`.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ours {
    Purest,
    Delta,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Ladder,
    Staircase,
    Laplace,
    Exponential,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, value_enum)]
    pub ours: Ours,
    #[arg(long, value_enum)]
    pub baseline: Baseline,
    /// `start:stop:step`, inclusive.
    #[arg(long)]
    pub eps_grid: Option<String>,
    /// `start:stop:step`; radii for `--ours delta` on linear specs.
    #[arg(long)]
    pub delta_grid: Option<String>,
    /// Radius used on the first `--delta-first` datasets of a finite space.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub delta_first: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub mech: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    /// Dataset id, or the query value for linear specs.
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
