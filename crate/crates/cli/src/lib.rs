//! Scenario runner: TOML scenario files in, JSON reports and Monte Carlo
//! tables out.

pub mod config;
pub mod run;

pub use config::Scenario;
pub use run::{exit_code, run, run_file, Overrides, Report};
