//! Command-line driver: configuration, runs, sweeps and the identity suite.

pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{parse_config, parse_config_for, ConfigError, RunConfig, Subcommand};
pub use run::{run, Outcome, RunError, EXIT_CONFIG, EXIT_GATE, EXIT_OK, EXIT_SOLVER};
pub use sweep::{sweep, sweep_into, SweepReport};
