//! Decision bookkeeping shared by the learned schemes: pending decisions,
//! per-decision outcome counters, transitions and rewards.

use std::collections::{BTreeMap, HashMap};

use crate::cache::CacheState;
use crate::catalog::ContentId;
use crate::drl::{NetworkShape, Transition};
use crate::importance::{immediate_reward, NormConfig, RewardConfig, RewardState, IMPORTANCE_LEVELS};
use crate::netmodel::NodeId;

use super::config::ExperimentConfig;
use super::scheme::Scheme;

/// Network shape for a learned scheme.
pub fn network_shape(config: &ExperimentConfig, scheme: Scheme) -> Option<NetworkShape> {
    if let Some(enc) = scheme.importance_encoding() {
        return Some(config.dqn.shape(enc.dim(), IMPORTANCE_LEVELS, scheme.dueling()));
    }
    (scheme == Scheme::CpDqn).then(|| config.dqn.shape(cp_state_dim(config.catalog.count), 2, false))
}

pub fn cp_state_dim(initial_catalog: usize) -> usize {
    initial_catalog + 2
}

/// One-hot over the initial catalog (ids 1..=n) followed by node load and the free
/// fraction of the cache. Contents outside the initial catalog get an
/// all-zero identity block.
pub fn cp_state(
    initial_catalog: usize,
    content: ContentId,
    window_requests: u64,
    cache: &CacheState,
    norm: &NormConfig,
) -> Vec<f64> {
    let mut s = vec![0.0; cp_state_dim(initial_catalog)];
    let id = content.0 as usize;
    if (1..=initial_catalog).contains(&id) {
        s[id - 1] = 1.0;
    }
    s[initial_catalog] = norm.load(window_requests);
    s[initial_catalog + 1] = if cache.capacity() == 0 {
        0.0
    } else {
        cache.free() as f64 / cache.capacity() as f64
    };
    s
}

/// Reward of a cache/skip decision: relative popularity above the node's
/// per-content mean while cached, zero when skipped.
pub fn cp_reward(action: usize, content_requests: u64, node_requests: u64, contents: usize) -> f64 {
    if action != 1 || node_requests == 0 || contents == 0 {
        return 0.0;
    }
    let mean = node_requests as f64 / contents as f64;
    content_requests as f64 / mean - 1.0
}

/// Reward of an importance decision: the band of the content's unsatisfied
/// share since the decision, or of the node's windowed share when the
/// content saw no requests.
pub fn importance_reward(
    content_requests: u64,
    content_unsatisfied: u64,
    node_window_ratio: Option<f64>,
    cfg: &RewardConfig,
) -> f64 {
    let ratio = if content_requests > 0 {
        content_unsatisfied as f64 / content_requests as f64
    } else {
        node_window_ratio.unwrap_or(0.0)
    };
    immediate_reward(ratio, cfg)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub requests: u64,
    pub unsatisfied: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pending {
    pub state: Vec<f64>,
    pub action: usize,
}

/// Open decisions and what happened since they were taken.
#[derive(Debug, Clone, Default)]
pub struct DecisionTracker {
    pending: BTreeMap<(NodeId, ContentId), Pending>,
    since: HashMap<(NodeId, ContentId), Outcome>,
    node_since: HashMap<NodeId, Outcome>,
    pub reward: RewardState,
    pub trajectory: Vec<f64>,
}

impl DecisionTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_request(&mut self, node: NodeId, content: ContentId, satisfied: bool) {
        for o in [
            self.since.entry((node, content)).or_default(),
            self.node_since.entry(node).or_default(),
        ] {
            o.requests += 1;
            if !satisfied {
                o.unsatisfied += 1;
            }
        }
    }

    pub fn outcome(&self, node: NodeId, content: ContentId) -> Outcome {
        self.since.get(&(node, content)).copied().unwrap_or_default()
    }

    pub fn node_outcome(&self, node: NodeId) -> Outcome {
        self.node_since.get(&node).copied().unwrap_or_default()
    }

    /// Closes the open decision for `key`, if any, into a transition ending
    /// in `next_state`.
    pub fn close(
        &mut self,
        key: (NodeId, ContentId),
        next_state: &[f64],
        terminal: bool,
        reward: impl FnOnce(&Pending) -> f64,
    ) -> Option<Transition> {
        let p = self.pending.remove(&key)?;
        let r = reward(&p);
        self.reward.accumulate_reward(r);
        Some(Transition {
            state: p.state,
            action: p.action,
            reward: r,
            next_state: next_state.to_vec(),
            terminal,
        })
    }

    pub fn open(&mut self, key: (NodeId, ContentId), state: Vec<f64>, action: usize) {
        self.pending.insert(key, Pending { state, action });
    }

    pub fn pending_keys(&self) -> Vec<(NodeId, ContentId)> {
        self.pending.keys().copied().collect()
    }

    pub fn pending(&self, key: (NodeId, ContentId)) -> Option<&Pending> {
        self.pending.get(&key)
    }

    /// Starts a new decision interval.
    pub fn reset_outcomes(&mut self) {
        self.since.clear();
        self.node_since.clear();
        self.trajectory.push(self.reward.accumulated);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cp_state_layout() {
        let mut cache = CacheState::new(100);
        cache.insert_lru(ContentId(1), 25, 0.0, 0);
        let norm = NormConfig::default();
        let s = cp_state(4, ContentId(2), 500, &cache, &norm);
        assert_eq!(s, vec![0.0, 1.0, 0.0, 0.0, 0.5, 0.75]);
        let fresh = cp_state(4, ContentId(9), 0, &cache, &norm);
        assert_eq!(&fresh[..4], &[0.0; 4]);
    }

    #[test]
    fn cp_reward_relative_popularity() {
        assert_eq!(cp_reward(0, 10, 20, 4), 0.0);
        assert_eq!(cp_reward(1, 10, 20, 4), 1.0);
        assert_eq!(cp_reward(1, 0, 20, 4), -1.0);
        assert_eq!(cp_reward(1, 0, 0, 4), 0.0);
    }

    #[test]
    fn importance_reward_falls_back_to_node_ratio() {
        let cfg = RewardConfig::default();
        assert_eq!(importance_reward(10, 0, Some(0.9), &cfg), 10.0);
        assert_eq!(importance_reward(10, 10, None, &cfg), -10.0);
        assert_eq!(importance_reward(0, 0, Some(0.15), &cfg), -5.0);
        assert_eq!(importance_reward(0, 0, None, &cfg), 10.0);
    }

    #[test]
    fn tracker_closes_once() {
        let mut t = DecisionTracker::new();
        let key = (NodeId(0), ContentId(3));
        assert!(t.close(key, &[1.0], false, |_| 1.0).is_none());
        t.open(key, vec![0.5], 4);
        t.record_request(NodeId(0), ContentId(3), false);
        t.record_request(NodeId(0), ContentId(2), true);
        assert_eq!(t.outcome(NodeId(0), ContentId(3)), Outcome { requests: 1, unsatisfied: 1 });
        assert_eq!(t.node_outcome(NodeId(0)).requests, 2);
        let tr = t.close(key, &[1.0], true, |p| p.action as f64).unwrap();
        assert_eq!((tr.action, tr.reward, tr.terminal), (4, 4.0, true));
        assert!(t.close(key, &[1.0], false, |_| 1.0).is_none());
        t.reset_outcomes();
        assert_eq!(t.node_outcome(NodeId(0)), Outcome::default());
        assert_eq!(t.trajectory, vec![4.0]);
    }
}
