//! Experiment harness: JSON-configured runs of the solvers in `homp-core`,
//! trajectory CSVs, summaries with fitted rates and monitor verdicts.

pub mod config;
pub mod error;
pub mod experiment;

pub use config::{ExperimentConfig, MethodConfig, MonitorConfig, StartPolicy};
pub use error::LabError;
pub use experiment::{rate_from_csvs, run_experiment, Mode, Outcome, RunOptions, Summary};
