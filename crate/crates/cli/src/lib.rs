//! Command-line front end: config parsing, subcommands and file output.

pub mod commands;
pub mod config;
