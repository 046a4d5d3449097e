//! Experiment plumbing: config files, batch runs, sweeps and output.

pub mod config;
pub mod microbench;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, GraphSource, Preset};
pub use runner::{run_experiment, sweep_tiles, OutputRecord};
