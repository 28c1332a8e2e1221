//! Command-line front end of `soliton-lab`: configuration, experiment
//! pipeline and report bundles.

pub mod app;
pub mod config;
pub mod pipeline;
pub mod report;

pub use app::{run_command, Cli, Command, EXIT_CERTIFICATION, EXIT_INCONCLUSIVE, EXIT_OK, EXIT_USAGE};
pub use config::{load_config, save_config, ConfigError, RunConfig};
pub use report::{save_report, ReportBundle, Table};
