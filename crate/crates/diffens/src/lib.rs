//! Experiment tooling around `diffens-core`: configuration files, CSV/JSON
//! formats, parallel training and the subcommand implementations.

pub mod config;
pub mod io;
pub mod persist;
pub mod runner;
pub mod train;

pub use config::ExperimentConfig;
