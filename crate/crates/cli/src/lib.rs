//! Configuration parsing, solver orchestration and CSV output for the
//! `waveguide` command-line tool.

pub mod config;
pub mod csvio;
pub mod run;

pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};
pub use csvio::{read_csv, CsvTable};
pub use run::{run_subcommand, CliError, RunSummary, Subcommand};
