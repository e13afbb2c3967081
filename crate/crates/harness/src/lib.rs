//! Experiment runner for the `bpfrls` estimators: TOML experiment configs,
//! built-in presets for three reference systems, dataset generation,
//! CSV traces with run metadata, estimator comparisons and Monte Carlo
//! summaries.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{ExperimentConfig, Method};
pub use error::{HarnessError, Result};
pub use presets::{preset, presets};
pub use run::{compare, montecarlo, run_cell, run_experiment, run_method, simulate, simulate_dataset, Dataset};
