//! Library side of the `fibrot` command-line tool: config schema,
//! subcommands and artifact writers.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{load, run, CliError, Command, Invocation};
pub use config::{RunConfig, SchemaError};
