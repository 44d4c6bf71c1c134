//! Command-line driver for the `rffid` workbench: TOML configs, on-disk
//! datasets and checkpoints, and the `gen`/`train`/`eval`/`report` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod store;

pub use error::{CliError, Result};
