//! Scenario files, report writers and the `immse` command line on top of
//! [`immse_core`].

pub mod catalog;
pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, LoadedConfig, Scenario, ScenarioSpec};
pub use run::{cmd_sweep, cmd_verify, Overrides, RunError, SweepOptions, VerifyOptions};
