//! Command-line front end for the `pe-consensus` simulator: TOML run
//! configurations, the `simulate`, `sweep` and `verify` commands, and SVG
//! diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{run, Cli, CliError};
pub use config::{ConfigError, LoadedConfig, RunConfig};
