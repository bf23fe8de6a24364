//! Experiment harness for LARS/SGD training runs: strict JSON configs,
//! synthetic-blob and IDX datasets, a deterministic training loop with
//! gradient accumulation and diagnostics, and one-axis sweeps.

pub mod config;
pub mod data;
pub mod error;
pub mod runner;
pub mod sweep;

pub use config::{load_config, DatasetConfig, ExperimentConfig, ModelConfig, OptimizerSettings};
pub use error::{HarnessError, Result};
pub use runner::{prepare, run_experiment, RunResult};
pub use sweep::{run_sweep, SweepAxis, SweepSpec, SweepSummary};
