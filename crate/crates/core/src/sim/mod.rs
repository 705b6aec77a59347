//! Simulation harness: synthetic data, label-flipping attacks, metrics and
//! the experiment driver behind the CLI.

pub mod config;
pub mod data;
pub mod experiment;
pub mod metrics;

pub use config::{AttackMode, DataConfig, ExperimentConfig, GroupChoice};
pub use data::{make_datasets, poison_labels, read_feature_file, write_feature_file, Datasets};
pub use experiment::{run_experiment, run_seed, sweep_clients, sweep_malice, ExperimentOutput, SeedRun};
pub use metrics::{Confusion, MetricsRecord};
