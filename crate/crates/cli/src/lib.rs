//! Scenario runner for the battery scheduling game: JSON configuration,
//! synthetic or CSV traces, sweeps, and CSV/JSON artifacts.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod oracle;
pub mod runner;

pub use config::{DataSource, HouseholdConfig, Mode, RunConfig};
pub use error::CliError;
pub use runner::{run, Summary};
