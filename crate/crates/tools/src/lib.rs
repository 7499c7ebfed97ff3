//! File formats, run configuration and the subcommands of the `aero`
//! command-line tool.

pub mod commands;
pub mod config;
pub mod formats;
pub mod units;
