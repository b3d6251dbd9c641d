//! File formats, parallel executors and the command line for
//! `meddesign-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod parallel;

pub use config::{parse_config, parse_config_str, ConfigError, ProblemConfig};
