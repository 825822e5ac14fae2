//! Experiment orchestration: configuration, the training loop, multi-seed
//! suite execution with caching, report generation, and the CLI.

pub mod battery;
pub mod cli;
pub mod config;
pub mod report;
pub mod suite;
pub mod train;

pub use battery::{gradient_battery, BatteryResult};
pub use config::{run_hash, ExperimentConfig, Objective, SuiteConfig};
pub use report::report;
pub use suite::{execute_run, run_dir, run_suite, Manifest, RunStatus};
pub use train::{train, RunRecord, TrainedRun};
