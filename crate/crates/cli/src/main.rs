//! `zrp`: simulation, exact checks and statistics for the zero-range current field.

mod bundle;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Format;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 1.
    Validation(String),
    /// Failure while running; exit code 2.
    Runtime(String),
    /// A check with a tolerance did not hold; exit code 3.
    Check(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "runtime failure: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<zrp_lab::Error> for CliError {
    fn from(e: zrp_lab::Error) -> Self {
        use zrp_lab::Error as E;
        match e {
            E::Parameter(_)
            | E::Range { .. }
            | E::Shape(_)
            | E::Support { .. }
            | E::Resolution(_)
            | E::Spec(_)
            | E::Unsupported(_)
            | E::Size { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "zrp", version, about = "Current fluctuations of the zero-range process with a source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command.
#[derive(Args, Clone)]
pub struct Common {
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `ZRP_OUT_DIR` and the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of tabular output.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replica ensemble of the particle system and write a bundle.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run an ensemble of the limiting stochastic heat equation and write a bundle.
    She {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Spectral gaps of the closed boxes with up to `kmax` particles and `lmax` sites.
    Gap {
        #[arg(long)]
        kmax: u32,
        #[arg(long)]
        lmax: u32,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form conditional expectation against enumeration.
    Psi {
        #[arg(long)]
        kmax: u32,
        #[arg(long)]
        lmax: u32,
        /// Largest tolerated deviation.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Large-deviation rate of the local density and its large-n limit.
    Ldp {
        #[arg(long)]
        b: f64,
        #[arg(long)]
        a: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [100u64, 1000, 10000])]
        ns: Vec<u64>,
        /// Fail unless the largest-n value is this close to the limit.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Hurst exponent of an observable in a bundle, from increments since t = 0.
    Hurst {
        bundle: PathBuf,
        #[arg(long, default_value = "j0")]
        observable: String,
        #[arg(long, default_value_t = 2000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Expected exponent; with `--tol` the command fails if the estimate is further away.
        #[arg(long, requires = "tol")]
        expect: Option<f64>,
        #[arg(long, requires = "expect")]
        tol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Exclusion positions and the tagged-displacement check.
    Map {
        config: PathBuf,
        /// Number of exclusion particles written and checked.
        #[arg(long)]
        particles: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Second moments of a particle bundle against a heat-equation bundle.
    Compare {
        particle: PathBuf,
        she: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        rel_tol: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { config, common } => commands::simulate(&config, &common),
        Command::She { config, common } => commands::she(&config, &common),
        Command::Gap { kmax, lmax, common } => commands::gap(kmax, lmax, &common),
        Command::Psi { kmax, lmax, tol, common } => commands::psi(kmax, lmax, tol, &common),
        Command::Ldp { b, a, ns, tol, common } => commands::ldp(b, a, &ns, tol, &common),
        Command::Hurst { bundle, observable, resamples, level, expect, tol, common } => {
            commands::hurst(&bundle, &observable, resamples, level, expect.zip(tol), &common)
        }
        Command::Map { config, particles, common } => commands::map(&config, particles, &common),
        Command::Compare { particle, she, rel_tol, common } => commands::compare(&particle, &she, rel_tol, &common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zrp: {e}");
            ExitCode::from(e.code())
        }
    }
}
