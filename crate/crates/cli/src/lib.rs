//! Command-line front end for the `maglorentz` workflows.

pub mod commands;
pub mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use commands::{run_command, CommandError};
pub use config::{load, ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "maglorentz", version, about = "Magnetic Lorentz gas and its low-density limit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file with one `key = value` per line.
    #[arg(long, short, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Override a config key, e.g. `--set eps=0.02`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Lorentz ensemble: trajectories.jsonl and summary.csv.
    SimulateLorentz,
    /// Limit-process ensemble: paths.jsonl.
    SimulateBoltzmann,
    /// Phase-space histogram at time t of either process.
    Density,
    /// Coupled pairs over the eps list: coupling.csv.
    Couple,
    /// Convergence table over the eps list: convergence.csv.
    Converge,
    /// Internal consistency checks; exit code 3 on failure.
    Selfcheck,
    /// Scatterers of one field realization inside a rectangle: field.csv.
    DumpField,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateLorentz => "simulate-lorentz",
            Command::SimulateBoltzmann => "simulate-boltzmann",
            Command::Density => "density",
            Command::Couple => "couple",
            Command::Converge => "converge",
            Command::Selfcheck => "selfcheck",
            Command::DumpField => "dump-field",
        }
    }
}

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_SELFCHECK: u8 = 3;

/// Parse arguments, run, and map failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let text = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: {}", ConfigError::Read(format!("{}: {e}", p.display())));
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => None,
    };
    let cfg = match load(text.as_deref(), &cli.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match pool.install(|| run_command(cli.command, &cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
