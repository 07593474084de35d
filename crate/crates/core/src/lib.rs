//! Discrete-event simulator for multi-modal (video, audio, haptic) content
//! delivery over edge caches.
//!
//! The crate bundles everything needed to reproduce cache-size sweeps and
//! time-series comparisons between caching schemes:
//!
//! - [`catalog`]: the content universe and per-class QoS requirements.
//! - [`workload`]: time-varying Zipf request streams with popularity shifts
//!   and content releases.
//! - [`netmodel`]: per-slot link accounting, hop counts and the QoS predicate.
//! - [`drl`]: a dueling double DQN written from scratch (network, replay,
//!   exploration schedule, gradient checking, checkpoints).
//! - [`importance`]: observation, state encoding, importance scoring, reward
//!   and trigger logic for the learned content-importance model.
//! - [`cache`]: importance-based admission/replacement and the baselines.
//! - [`metrics`]: hop, hit, load and unsatisfied-request ratios.
//! - [`harness`]: configuration, the slot loop, training, sweeps and CSV output.

pub mod cache;
pub mod catalog;
pub mod drl;
pub mod error;
pub mod harness;
pub mod importance;
pub mod metrics;
pub mod netmodel;
pub mod rng;
pub mod workload;

pub use cache::{CacheDecision, CacheEntry, CacheState};
pub use catalog::{Catalog, CatalogSpec, Content, ContentId, Modality, ModalityClass, QosRequirement};
pub use error::{Error, Result};
pub use harness::config::ExperimentConfig;
pub use harness::scheme::Scheme;
pub use metrics::{EventRecord, MetricsAccumulator, MetricsSnapshot};
pub use netmodel::{EdgeNode, NodeId, SlotLedger, TransferOutcome};
pub use workload::{Request, WorkloadProfile};
