use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scheme::Scheme;
use crate::catalog::{CatalogSpec, MB};
use crate::drl::DqnConfig;
use crate::error::{Error, Result};
use crate::importance::{ImportanceWeights, NormConfig, RewardConfig, TriggerConfig};
use crate::netmodel::{EdgeNode, LinkModel, NodeId};
use crate::workload::{Phase, WorkloadProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopologyConfig {
    pub nodes: u32,
    pub access_bw_bps: f64,
    pub backbone_bw_bps: f64,
    pub link: LinkModel,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            nodes: 2,
            access_bw_bps: 1e9,
            backbone_bw_bps: 100e9,
            link: LinkModel::default(),
        }
    }
}

impl TopologyConfig {
    pub fn edge_nodes(&self, cache_bytes: u64) -> Vec<EdgeNode> {
        (0..self.nodes)
            .map(|n| EdgeNode {
                node_id: NodeId(n),
                access_bw_bps: self.access_bw_bps,
                backbone_bw_bps: self.backbone_bw_bps,
                cache_capacity_bytes: cache_bytes,
            })
            .collect()
    }
}

/// Training-loop settings beyond the network hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Seed from which every training episode seed is derived.
    pub seed: u64,
    /// Cache size used while training; evaluation reuses the frozen agent
    /// at every swept size.
    pub cache_bytes: u64,
    /// Gradient steps per simulated slot once the replay buffer is warm.
    pub train_steps_per_slot: u32,
    /// Greedy validation cadence in episodes; the best validated parameters
    /// are kept.
    pub validate_every: u32,
    pub validation_seeds: Vec<u64>,
    /// Moving-average window over episode rewards for early stopping.
    pub plateau_window: u32,
    /// Stop when the moving average improved by less than
    /// `plateau_min_improvement` (relative) over this many episodes.
    pub plateau_patience: u32,
    pub plateau_min_improvement: f64,
    /// Train on the workload without shifts and releases.
    pub stationary: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            seed: 2024,
            cache_bytes: 400 * MB,
            train_steps_per_slot: 1,
            validate_every: 20,
            validation_seeds: vec![9001, 9002],
            plateau_window: 100,
            plateau_patience: 300,
            plateau_min_improvement: 0.01,
            stationary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub catalog: CatalogSpec,
    pub workload: WorkloadProfile,
    pub topology: TopologyConfig,
    pub schemes: Vec<Scheme>,
    pub cache_sizes_bytes: Vec<u64>,
    pub seeds: Vec<u64>,
    pub dqn: DqnConfig,
    pub training: TrainingConfig,
    pub reward: RewardConfig,
    pub trigger: TriggerConfig,
    pub norm: NormConfig,
    pub static_weights: ImportanceWeights,
    pub observer_window_slots: u32,
    pub popularity_window_slots: u32,
    pub metrics_window_slots: u32,
    /// Also report the per-cell summed-fraction metrics.
    pub summed_fractions: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            catalog: CatalogSpec::default(),
            workload: WorkloadProfile::default(),
            topology: TopologyConfig::default(),
            schemes: Scheme::DEFAULT_SWEEP.to_vec(),
            cache_sizes_bytes: (1..=10).map(|i| i * 100 * MB).collect(),
            seeds: (1..=5).collect(),
            dqn: DqnConfig::default(),
            training: TrainingConfig::default(),
            reward: RewardConfig::default(),
            trigger: TriggerConfig::default(),
            norm: NormConfig::default(),
            static_weights: ImportanceWeights::default(),
            observer_window_slots: 60,
            popularity_window_slots: 60,
            metrics_window_slots: 60,
            summed_fractions: false,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Expected requests over all nodes in the full-scale setting.
pub const FULL_SCALE_REQUESTS: f64 = 24_412.0;

impl ExperimentConfig {
    /// 500 contents, 6 nodes, 30 seeds, request rates scaled so that the
    /// expected total is 24,412 requests.
    pub fn full_scale() -> Self {
        let mut cfg = ExperimentConfig {
            catalog: CatalogSpec {
                count: 500,
                ..CatalogSpec::default()
            },
            topology: TopologyConfig {
                nodes: 6,
                ..TopologyConfig::default()
            },
            seeds: (1..=30).collect(),
            ..Self::default()
        };
        let base = cfg.workload.expected_requests_per_node() * f64::from(cfg.topology.nodes);
        let scale = FULL_SCALE_REQUESTS / base;
        cfg.workload.phases = cfg
            .workload
            .phases
            .iter()
            .map(|p| Phase {
                start_slot: p.start_slot,
                rate: p.rate * scale,
            })
            .collect();
        cfg.norm.max_window_requests *= scale;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.topology.nodes == 0 {
            return Err(Error::Config("at least one node is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.topology.access_bw_bps > 0.0 && self.topology.backbone_bw_bps > 0.0) {
            return Err(Error::Config("link bandwidths must be positive".into()));
        }
        if self.observer_window_slots == 0
            || self.popularity_window_slots == 0
            || self.metrics_window_slots == 0
        {
            return Err(Error::Config("windows must be at least one slot".into()));
        }
        self.catalog.validate()?;
        self.workload.validate()?;
        self.dqn.validate()?;
        self.reward.validate()?;
        self.trigger.validate()?;
        self.static_weights.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Workload used for training episodes.
    pub fn training_workload(&self) -> WorkloadProfile {
        if self.training.stationary {
            self.workload.stationary()
        } else {
            self.workload.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = ExperimentConfig::default();
        assert_eq!(c.dqn.max_episodes, 3000);
        assert_eq!(c.dqn.learning_rate, 0.0005);
        assert_eq!(c.dqn.gamma, 0.99);
        assert_eq!(c.dqn.epsilon.start, 0.99);
        assert_eq!(c.dqn.epsilon.end, 0.01);
        assert_eq!(c.topology.access_bw_bps, 1e9);
        assert_eq!(c.topology.backbone_bw_bps, 100e9);
        assert_eq!(c.workload.horizon_slots, 480);
        assert_eq!(c.workload.slot_length_s * f64::from(c.workload.horizon_slots), 480.0);
        assert_eq!(ExperimentConfig::full_scale().topology.nodes, 6);
        c.validate().unwrap();
        ExperimentConfig::full_scale().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        let partial = "seeds = [7]\nschemes = [\"lce\", \"d3qn\"]\n[topology]\nnodes = 3\n";
        let p = ExperimentConfig::from_toml_str(partial).unwrap();
        assert_eq!(p.seeds, vec![7]);
        assert_eq!(p.schemes, vec![Scheme::Lce, Scheme::D3qn]);
        assert_eq!(p.topology.nodes, 3);
        assert_eq!(p.topology.access_bw_bps, 1e9);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ExperimentConfig::from_toml_str("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml_str("[topology]\nnodes = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("[dqn]\nmax_episodes = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("schemes = [\"fifo\"]").is_err());
    }
}
