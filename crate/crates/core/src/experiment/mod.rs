//! Experiment orchestration: config files, run directories, checkpoints, and
//! the train / analyze / intervene / compare entry points used by the CLI.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod intervene;
pub mod runner;

pub use checkpoint::Checkpoint;
pub use compare::{run_compare, CompareSummary};
pub use config::{ExperimentConfig, MetricsConfig, PolicyConfig, TaskConfig, TaskKindConfig};
pub use intervene::{run_intervene, InterveneOptions, InterveneSummary};
pub use runner::{run_analyze, run_train, RunInfo, RunPaths, RunSummary};
