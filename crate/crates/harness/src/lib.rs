//! Command-line harness for the `nlkg` lab: configuration files, the
//! per-subcommand pipelines, CSV output and parallel parameter sweeps.

pub mod config;
pub mod pipeline;
pub mod sweep;
pub mod table;

pub use config::{parse_config, parse_config_onto, parse_config_str, parse_sweep, ConfigError, RunConfig, SweepSpec};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] nlkg::Error),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
