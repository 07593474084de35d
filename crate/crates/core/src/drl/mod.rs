//! Dueling double deep Q-learning, written against plain `Vec<f64>` tensors.

pub mod checkpoint;
pub mod gradcheck;
pub mod learning;
pub mod network;
pub mod replay;
pub mod schedule;

pub use learning::{select_action, sync_target, td_targets, train_step, DqnConfig, Learner, SgdConfig};
pub use network::{argmax, NetworkShape, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::{EpsilonConfig, EpsilonSchedule};
