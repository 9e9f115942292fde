//! Experiment harness behind the `chanmix` binary.
//!
//! A run is described by an [`ExperimentConfig`], read from strict JSON or
//! assembled from command-line flags, and produces a [`ResultRecord`] plus
//! an optional CSV time series.

pub mod args;
pub mod config;
pub mod record;
pub mod run;

pub use args::{parse_config, Cli};
pub use config::ExperimentConfig;
pub use record::{write_atomic, Csv, ResultRecord};
pub use run::run_experiment;
