//! Configuration, CSV/SVG emission and experiment orchestration behind the
//! `mopo` binary.

pub mod app;
pub mod config;
pub mod csvio;
pub mod experiments;
pub mod svg;

pub use app::{exit_code, run, Cli};
pub use config::{ConfigFile, ExperimentConfig, ExperimentKind};
pub use experiments::run_experiment;
