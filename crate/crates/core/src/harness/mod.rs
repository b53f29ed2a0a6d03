//! Experiment runner, reports and command-line interface.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod report;

pub use cli::cli_main;
pub use config::{ConfigError, ExperimentConfig, ExperimentKind, MethodConfig, ObservationConfig};
pub use experiments::run_experiment;
pub use report::{ExperimentReport, InstanceRecord, MethodRecord, SummaryRow};
