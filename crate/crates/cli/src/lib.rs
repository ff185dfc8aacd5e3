//! Command-line front end for `trackagg`.
//!
//! Every subcommand writes into a single run directory (`--out`) holding its
//! artifacts, the effective configuration (`config.toml`) and a
//! machine-readable `summary.json`. Settings resolve as flags, then the
//! `--config` TOML file, then built-in defaults.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

pub use args::{Cli, Command};
pub use error::{CliError, ExitKind};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    commands::dispatch(&cli.command)
}
