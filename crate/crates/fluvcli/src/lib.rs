//! Command-line front end of the fluvial GAN toolkit.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod render;

pub use commands::Model;
pub use config::{resolve, CliConfig, DataConfig, DataSource, Overrides, SplitSpec};
pub use error::{CliError, Result};
