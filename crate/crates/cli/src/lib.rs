//! The `lumirec` pipeline: each subcommand reads artifacts from a workspace
//! directory, runs one stage and writes its outputs plus a manifest.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod workspace;

pub use cli::{run, Cli};
pub use error::CliError;
