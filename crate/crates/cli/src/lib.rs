//! File formats, configuration and the `biasret` command-line pipeline
//! around `biasret-core`.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::{Overrides, PipelineConfig};
pub use error::{CliError, Result};
