//! Experiment driver: configuration, the slot loop, training, sweeps and
//! result files.

pub mod agents;
pub mod config;
pub mod results;
pub mod scheme;
pub mod sim;
pub mod sweep;
pub mod train;

pub use config::ExperimentConfig;
pub use results::{emit_csv, ResultRow};
pub use scheme::Scheme;
pub use sim::{generate_trace, replay_trace, run_episode, AgentMode, EpisodeResult};
pub use sweep::{sweep, Aggregate, SweepResult};
pub use train::{train, TrainedAgent, TrainingReport};
