//! `delone`: build, export and verify repetitive Delone sets of prescribed
//! density.
//!
//! Exit codes: 0 pass, 1 operational error, 2 configuration error,
//! 3 verification failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use delone_core::Error;

#[derive(Parser, Debug)]
#[command(name = "delone", version, about = "Repetitive Delone sets encoding a prescribed density")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the schedule constraints level by level.
    Validate(Common),
    /// Write the points of X in a window as CSV with a metadata sidecar.
    Points(PointsArgs),
    /// Write one PGM raster per colour of a level.
    Render(RenderArgs),
    /// Run the verification suite and write report.txt and report.json.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Schedule file `{d, p, c, mode}`, overriding the config.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Density spec file `{kind, params, depth}`, overriding the config.
    #[arg(long)]
    pub density: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the parallel kernels.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for cached α tables; also read from `DELONE_CACHE_DIR`.
    #[arg(long, env = "DELONE_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest grid, in cells, that may be materialized.
    #[arg(long)]
    pub materialize_cap: Option<u64>,
    /// Largest number of tiles whose α may be computed for one level.
    #[arg(long)]
    pub alpha_budget: Option<u128>,
}

#[derive(Args, Debug, Clone)]
pub struct PointsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Lower window corner, comma separated (e.g. `-32,-32` or `0.5,1/4`).
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<String>,
    /// Upper window corner.
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub level: Option<usize>,
    /// `P2` (ASCII) or `P5` (binary).
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Goodness,
    Repetitivity,
    NetRepetitivity,
    Encoding,
    Nesting,
    All,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "all")]
    pub which: Which,
    /// Radii for the colouring repetitivity check (repeatable).
    #[arg(long = "radius")]
    pub radii: Vec<i64>,
    /// Radii for the point-set repetitivity check (repeatable).
    #[arg(long = "net-radius")]
    pub net_radii: Vec<i64>,
    /// Sampled pairs per radius.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Descent samples and consistency samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Corrupt a named condition before checking: `palette` flips one cell
    /// of a level-2 colour; any section name forces that section to fail.
    #[arg(long)]
    pub inject_fault: Option<String>,
}

/// How a command ended, mapped onto the exit code.
#[derive(Debug)]
pub enum Failure {
    Operational(String),
    Config(String),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_operational() {
            Failure::Operational(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(c) => commands::validate(&c),
        Command::Points(a) => commands::points(&a),
        Command::Render(a) => commands::render(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Operational(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(3)
        }
    }
}
