//! The slot-stepped simulation of one episode.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use crate::cache::{dpwcs_admits, CacheState};
use crate::catalog::{build_catalog, Catalog, ContentId};
use crate::drl::{select_action, Learner, QNetwork};
use crate::error::{Error, Result};
use crate::importance::{
    encode_state, should_trigger, static_importance, Observer, ScoreTable, TriggerEvent, TriggerState,
};
use crate::metrics::{Counters, EventRecord, MetricsAccumulator, MetricsSnapshot, SummedFractions, WindowMetrics};
use crate::netmodel::{admit_transfer, qos_satisfied, NodeId, SlotLedger};
use crate::rng::{self, SimRng};
use crate::workload::{Request, WorkloadDriver, WorkloadEvent};

use super::agents::{cp_reward, cp_state, importance_reward, network_shape, DecisionTracker};
use super::config::ExperimentConfig;
use super::scheme::Scheme;

/// How a learned scheme obtains its decisions.
pub enum AgentMode<'a> {
    /// ε-greedy decisions; transitions feed the learner, which trains.
    Train { learner: &'a mut Learner, epsilon: f64 },
    /// Greedy decisions from fixed parameters.
    Frozen(&'a QNetwork),
    /// Greedy decisions from a freshly initialized network (ignored by
    /// schemes without a network).
    None,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub scheme: Scheme,
    pub seed: u64,
    pub cache_size_bytes: u64,
    pub counters: Counters,
    /// `None` when the episode saw no requests.
    pub snapshot: Option<MetricsSnapshot>,
    pub windows: Vec<WindowMetrics>,
    pub summed: Option<SummedFractions>,
    /// Accumulated decision reward, for learned schemes.
    pub reward: Option<f64>,
    /// Accumulated reward after each decision round.
    pub reward_trajectory: Vec<f64>,
    pub mean_loss: Option<f64>,
    pub transitions: u64,
    /// Final score table of importance-scoring schemes.
    pub scores: Option<ScoreTable>,
    pub wall_time: Duration,
}

enum Policy<'a> {
    Train(&'a mut Learner, f64),
    Greedy(&'a QNetwork),
}

impl Policy<'_> {
    fn act(&self, state: &[f64], rng: &mut SimRng) -> Result<usize> {
        match self {
            Policy::Train(l, eps) => select_action(&l.online, state, *eps, rng),
            Policy::Greedy(net) => select_action(net, state, 0.0, rng),
        }
    }
}

struct Episode<'c> {
    config: &'c ExperimentConfig,
    scheme: Scheme,
    catalog: Catalog,
    initial_catalog: usize,
    caches: Vec<CacheState>,
    observer: Observer,
    popularity: Observer,
    /// Current importance per (node, content) for scoring schemes.
    importance: HashMap<(NodeId, ContentId), f64>,
    admit: HashMap<(NodeId, ContentId), bool>,
    scores: ScoreTable,
    tracker: DecisionTracker,
    policy_rng: SimRng,
    losses: Vec<f64>,
    transitions: u64,
}

impl Episode<'_> {
    fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.config.topology.nodes).map(NodeId)
    }

    fn state_for(&self, node: NodeId, content: ContentId) -> Result<Vec<f64>> {
        if let Some(enc) = self.scheme.importance_encoding() {
            let obs = self.observer.observe(&self.catalog, node, content)?;
            return Ok(encode_state(&obs, &self.config.norm, enc).0);
        }
        Ok(cp_state(
            self.initial_catalog,
            content,
            self.observer.node_total(node)?,
            &self.caches[node.0 as usize],
            &self.config.norm,
        ))
    }

    fn reward_for(&self, node: NodeId, content: ContentId, action: usize) -> Result<f64> {
        let o = self.tracker.outcome(node, content);
        if self.scheme == Scheme::CpDqn {
            let n = self.tracker.node_outcome(node).requests;
            return Ok(cp_reward(action, o.requests, n, self.catalog.len()));
        }
        Ok(importance_reward(
            o.requests,
            o.unsatisfied,
            self.observer.node_unsatisfied_ratio(node)?,
            &self.config.reward,
        ))
    }

    /// One decision round: close the open decisions, take new ones and push
    /// the resulting scores to the caches.
    fn decide(&mut self, slot: u32, policy: &mut Policy<'_>, terminal: bool) -> Result<()> {
        let nodes: Vec<NodeId> = self.nodes().collect();
        let ids: Vec<ContentId> = self.catalog.ids().collect();
        let mut fresh = Vec::new();
        for &node in &nodes {
            for &id in &ids {
                let state = self.state_for(node, id)?;
                if let Some(p) = self.tracker.pending((node, id)) {
                    let r = self.reward_for(node, id, p.action)?;
                    let t = self.tracker.close((node, id), &state, terminal, |_| r).unwrap();
                    self.transitions += 1;
                    fresh.push(t);
                }
                if terminal {
                    continue;
                }
                let action = policy.act(&state, &mut self.policy_rng)?;
                self.apply(node, id, action, slot);
                self.tracker.open((node, id), state, action);
            }
        }
        self.tracker.reset_outcomes();
        if let Policy::Train(learner, _) = policy {
            for t in fresh {
                learner.remember(t);
            }
        }
        Ok(())
    }

    fn apply(&mut self, node: NodeId, id: ContentId, action: usize, slot: u32) {
        if self.scheme == Scheme::CpDqn {
            self.admit.insert((node, id), action == 1);
            return;
        }
        let score = self.publish_score(node, id, action, slot);
        self.importance.insert((node, id), score);
        self.caches[node.0 as usize].set_importance(id, score);
    }

    fn publish_score(&mut self, node: NodeId, id: ContentId, action: usize, slot: u32) -> f64 {
        self.scores.insert(crate::importance::ImportanceScore {
            content_id: id,
            node_id: node,
            value: action,
            issued_at: slot,
        });
        action as f64
    }

    fn static_round(&mut self) -> Result<()> {
        let nodes: Vec<NodeId> = self.nodes().collect();
        let ids: Vec<ContentId> = self.catalog.ids().collect();
        for &node in &nodes {
            for &id in &ids {
                let obs = self.observer.observe(&self.catalog, node, id)?;
                let score = static_importance(&self.config.static_weights, &obs, &self.config.norm);
                self.importance.insert((node, id), score);
                self.caches[node.0 as usize].set_importance(id, score);
            }
        }
        Ok(())
    }

    /// Serves one request and applies the scheme's caching decision.
    fn serve(&mut self, ledger: &mut SlotLedger, node: NodeId, id: ContentId, slot: u32) -> Result<EventRecord> {
        let content = self.catalog.get(id).ok_or(Error::UnknownContent(id))?.clone();
        let n = node.0 as usize;
        let cache = &mut self.caches[n];
        let hit = if self.scheme == Scheme::LruOnly {
            cache.stack_access(id, content.size, slot).0
        } else {
            cache.lookup(id, slot)
        };
        let outcome = admit_transfer(ledger, &self.config.topology.link, node, &content, hit);
        let satisfied = qos_satisfied(&outcome);
        let score = self.importance.get(&(node, id)).copied().unwrap_or(0.0);
        match self.scheme {
            Scheme::LruOnly => {}
            _ if hit => {
                if self.scheme.importance_encoding().is_some() || self.scheme == Scheme::StaticWeights {
                    cache.set_importance(id, score);
                }
            }
            Scheme::D3qn | Scheme::NoModality | Scheme::StaticWeights => {
                cache.on_content_arrival(id, content.size, score, slot);
            }
            Scheme::Ddqn => {
                cache.insert_evicting_lowest(id, content.size, score, slot);
            }
            Scheme::Lce => {
                cache.insert_lru(id, content.size, 0.0, slot);
            }
            Scheme::Dpwcs => {
                let counts = self.popularity.window_counts(node)?;
                let count = counts.get(&id).copied().unwrap_or(0);
                let mean = if counts.is_empty() {
                    0.0
                } else {
                    counts.values().sum::<u64>() as f64 / counts.len() as f64
                };
                if dpwcs_admits(count, mean) {
                    cache.insert_lru(id, content.size, 0.0, slot);
                }
            }
            Scheme::CpDqn => {
                if self.admit.get(&(node, id)).copied().unwrap_or(false) {
                    cache.insert_lru(id, content.size, 0.0, slot);
                }
            }
        }
        Ok(EventRecord {
            slot,
            node_id: node,
            content_id: id,
            hit,
            hops: outcome.hops,
            bytes: content.size,
            satisfied,
        })
    }
}

/// Runs one episode of `scheme` with every node caching `cache_bytes`.
/// Deterministic in (config, scheme, seed, cache size, agent parameters).
pub fn run_episode(
    config: &ExperimentConfig,
    scheme: Scheme,
    seed: u64,
    cache_bytes: u64,
    mode: AgentMode<'_>,
) -> Result<EpisodeResult> {
    simulate(config, scheme, seed, cache_bytes, mode, None)
}

/// Runs one episode whose requests come from `trace` instead of the
/// generator. Shifts and releases still follow the configured profile, so a
/// trace from [`generate_trace`] with the same seed reproduces
/// [`run_episode`].
pub fn replay_trace(
    config: &ExperimentConfig,
    scheme: Scheme,
    seed: u64,
    cache_bytes: u64,
    mode: AgentMode<'_>,
    trace: &[Request],
) -> Result<EpisodeResult> {
    let horizon = config.workload.horizon_slots;
    let mut by_slot: BTreeMap<(u32, NodeId), Vec<Request>> = BTreeMap::new();
    for r in trace {
        if r.slot >= horizon || r.node_id.0 >= config.topology.nodes {
            return Err(Error::Config(format!(
                "trace request at slot {} node {} lies outside the configured run",
                r.slot, r.node_id.0
            )));
        }
        by_slot.entry((r.slot, r.node_id)).or_default().push(*r);
    }
    for reqs in by_slot.values_mut() {
        reqs.sort_by_key(|r| r.arrival_order);
    }
    simulate(config, scheme, seed, cache_bytes, mode, Some(by_slot))
}

/// The request stream `run_episode` would see for `seed`.
pub fn generate_trace(config: &ExperimentConfig, seed: u64) -> Result<Vec<Request>> {
    let mut catalog = build_catalog(&config.catalog)?;
    let mut driver = WorkloadDriver::new(config.workload.clone(), &catalog, config.catalog.size_ranges, seed)?;
    let mut trace = Vec::new();
    for slot in 0..config.workload.horizon_slots {
        driver.begin_slot(slot, &mut catalog)?;
        for node in 0..config.topology.nodes {
            trace.extend(driver.requests(NodeId(node), slot)?);
        }
    }
    Ok(trace)
}

fn simulate(
    config: &ExperimentConfig,
    scheme: Scheme,
    seed: u64,
    cache_bytes: u64,
    mode: AgentMode<'_>,
    mut trace: Option<BTreeMap<(u32, NodeId), Vec<Request>>>,
) -> Result<EpisodeResult> {
    let started = Instant::now();
    let catalog = build_catalog(&config.catalog)?;
    let mut driver = WorkloadDriver::new(
        config.workload.clone(),
        &catalog,
        config.catalog.size_ranges,
        seed,
    )?;
    let nodes = config.topology.edge_nodes(cache_bytes);
    let mut ledger = SlotLedger::new(&nodes, config.topology.backbone_bw_bps);
    let mut ep = Episode {
        config,
        scheme,
        initial_catalog: catalog.len(),
        catalog,
        caches: nodes.iter().map(|n| CacheState::new(n.cache_capacity_bytes)).collect(),
        observer: Observer::new(&ledger, config.observer_window_slots),
        popularity: Observer::new(&ledger, config.popularity_window_slots),
        importance: HashMap::new(),
        admit: HashMap::new(),
        scores: ScoreTable::new(),
        tracker: DecisionTracker::new(),
        policy_rng: rng::stream(seed, "policy"),
        losses: Vec::new(),
        transitions: 0,
    };

    let untrained;
    let mut policy = match (scheme.is_learned(), mode) {
        (false, _) => None,
        (true, AgentMode::Train { learner, epsilon }) => Some(Policy::Train(learner, epsilon)),
        (true, AgentMode::Frozen(net)) => Some(Policy::Greedy(net)),
        (true, AgentMode::None) => {
            let shape = network_shape(config, scheme).expect("learned scheme has a network");
            untrained = QNetwork::new(shape, &mut rng::stream(seed, "untrained"));
            Some(Policy::Greedy(&untrained))
        }
    };
    if let Some(p) = &policy {
        let net = match p {
            Policy::Train(l, _) => &l.online,
            Policy::Greedy(n) => *n,
        };
        let expected = network_shape(config, scheme).expect("learned scheme has a network");
        if net.shape() != &expected {
            return Err(Error::ShapeMismatch);
        }
    }

    let mut metrics = if config.summed_fractions {
        MetricsAccumulator::with_summed_fractions()
    } else {
        MetricsAccumulator::new()
    };
    let mut trigger = TriggerState::new(config.trigger);
    let scores_content = scheme.is_learned() || scheme == Scheme::StaticWeights;
    let horizon = config.workload.horizon_slots;

    for slot in 0..horizon {
        ledger.reset();
        let mut events: Vec<TriggerEvent> = driver
            .begin_slot(slot, &mut ep.catalog)?
            .into_iter()
            .map(|e| match e {
                WorkloadEvent::Released(id) => TriggerEvent::Released(id),
                WorkloadEvent::PatternShift => TriggerEvent::PatternShift,
            })
            .collect();
        if trigger.rate_jump(slot) {
            events.push(TriggerEvent::RateJump);
        }
        if scores_content && should_trigger(&trigger, slot, &events) {
            match policy.as_mut() {
                Some(p) => ep.decide(slot, p, false)?,
                None => ep.static_round()?,
            }
        }

        let mut slot_requests = 0u64;
        for node in ep.nodes().collect::<Vec<_>>() {
            let reqs = match trace.as_mut() {
                Some(t) => t.remove(&(slot, node)).unwrap_or_default(),
                None => driver.requests(node, slot)?,
            };
            for req in reqs {
                let event = ep.serve(&mut ledger, node, req.content_id, slot)?;
                metrics.record(&event);
                ep.observer.record_request(node, req.content_id, event.satisfied)?;
                ep.popularity.record_request(node, req.content_id, event.satisfied)?;
                ep.tracker.record_request(node, req.content_id, event.satisfied);
                slot_requests += 1;
            }
        }
        if let Some(Policy::Train(learner, _)) = policy.as_mut() {
            for _ in 0..config.training.train_steps_per_slot {
                if let Some(loss) = learner.train_if_ready()? {
                    ep.losses.push(loss);
                }
            }
        }
        trigger.record_slot(slot_requests);
        ep.observer.end_slot(&ledger);
        ep.popularity.end_slot(&ledger);
        for (n, cache) in ep.caches.iter().enumerate() {
            cache.check_invariants(NodeId(n as u32))?;
        }
    }
    if let Some(p) = policy.as_mut() {
        ep.decide(horizon, p, true)?;
    }

    let window = config.metrics_window_slots;
    metrics.check_conservation(window, horizon)?;
    let learned = scheme.is_learned();
    let mean_loss = (!ep.losses.is_empty()).then(|| ep.losses.iter().sum::<f64>() / ep.losses.len() as f64);
    Ok(EpisodeResult {
        scheme,
        seed,
        cache_size_bytes: cache_bytes,
        counters: *metrics.totals(),
        snapshot: metrics.snapshot().ok(),
        windows: metrics.window_series(window, horizon)?,
        summed: metrics.summed_fractions(),
        reward: learned.then_some(ep.tracker.reward.accumulated),
        reward_trajectory: ep.tracker.trajectory,
        mean_loss,
        transitions: ep.transitions,
        scores: scheme.importance_encoding().map(|_| ep.scores),
        wall_time: started.elapsed(),
    })
}
