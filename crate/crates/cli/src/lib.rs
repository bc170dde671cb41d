//! Command-line pipeline around `memwave-core`: configuration, file formats,
//! reports and the subcommand drivers.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;

pub use config::{DataPath, ExperimentConfig, Noise};
pub use error::{CliError, Result};
