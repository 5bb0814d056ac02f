//! Command-line front end: configuration, the run verbs and the release checks.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::RunConfig;
pub use error::CliError;
