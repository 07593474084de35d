//! Content-importance model: what the controller observes, the ID-free state
//! encoding, scoring (learned and static), rewards and trigger logic.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ContentId, Modality};
use crate::drl::{select_action, QNetwork};
use crate::error::{Error, Result};
use crate::netmodel::{NodeId, SlotLedger};

/// Number of distinct importance levels the agent can emit.
pub const IMPORTANCE_LEVELS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub node_id: NodeId,
    pub content_id: ContentId,
    pub available_access_bw_bps: f64,
    pub content_request_count: u64,
    pub node_total_requests: u64,
    pub modality: Modality,
    pub content_size: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    pub max_access_bw_bps: f64,
    /// Node requests per observer window mapped to a load of 1.
    pub max_window_requests: f64,
    pub max_content_size_bytes: u64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            max_access_bw_bps: 1e9,
            max_window_requests: 1000.0,
            max_content_size_bytes: 500_000_000,
        }
    }
}

impl NormConfig {
    pub fn bandwidth(&self, bps: f64) -> f64 {
        clamp01(bps / self.max_access_bw_bps)
    }

    pub fn load(&self, requests: u64) -> f64 {
        clamp01(requests as f64 / self.max_window_requests)
    }

    pub fn size(&self, bytes: u64) -> f64 {
        clamp01(bytes as f64 / self.max_content_size_bytes as f64)
    }
}

fn clamp01(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

pub fn popularity_share(count: u64, total: u64) -> f64 {
    clamp01(count as f64 / total.max(1) as f64)
}

/// Which features enter the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateEncoding {
    /// Bandwidth, share, load, modality one-hot, size.
    Full,
    /// As `Full` without the modality one-hot.
    NoModality,
}

impl StateEncoding {
    pub fn dim(self) -> usize {
        match self {
            StateEncoding::Full => 7,
            StateEncoding::NoModality => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Encodes an observation. The content id never reaches the state.
pub fn encode_state(obs: &Observation, norm: &NormConfig, encoding: StateEncoding) -> StateVector {
    let mut v = Vec::with_capacity(encoding.dim());
    v.push(norm.bandwidth(obs.available_access_bw_bps));
    v.push(popularity_share(obs.content_request_count, obs.node_total_requests));
    v.push(norm.load(obs.node_total_requests));
    if encoding == StateEncoding::Full {
        let mut hot = [0.0; 3];
        hot[obs.modality.index()] = 1.0;
        v.extend_from_slice(&hot);
    }
    v.push(norm.size(obs.content_size));
    StateVector(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub content_id: ContentId,
    pub node_id: NodeId,
    pub value: usize,
    pub issued_at: u32,
}

/// Strips identities before encoding and re-attaches them to the score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingFunction {
    pub norm: NormConfig,
    pub encoding: StateEncoding,
}

impl MappingFunction {
    pub fn strip(&self, obs: &Observation) -> ((NodeId, ContentId), StateVector) {
        ((obs.node_id, obs.content_id), encode_state(obs, &self.norm, self.encoding))
    }

    pub fn attach(&self, key: (NodeId, ContentId), value: usize, slot: u32) -> ImportanceScore {
        ImportanceScore {
            node_id: key.0,
            content_id: key.1,
            value,
            issued_at: slot,
        }
    }
}

/// Scores one observation with an ε-greedy policy over `net`. Also returns
/// the encoded state so the caller can build transitions from it.
pub fn evaluate<R: Rng + ?Sized>(
    net: &QNetwork,
    mapping: &MappingFunction,
    obs: &Observation,
    epsilon: f64,
    slot: u32,
    rng: &mut R,
) -> Result<(ImportanceScore, StateVector)> {
    let (key, state) = mapping.strip(obs);
    let value = select_action(net, state.as_slice(), epsilon, rng)?;
    Ok((mapping.attach(key, value, slot), state))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for ImportanceWeights {
    fn default() -> Self {
        ImportanceWeights {
            w1: 0.25,
            w2: 0.25,
            w3: 0.25,
            w4: 0.25,
        }
    }
}

impl ImportanceWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w1, self.w2, self.w3, self.w4].iter().all(|w| w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("importance weights must be finite".into()))
        }
    }

    /// Weighted sum of (bandwidth, share, modality code, size term).
    pub fn combine(&self, components: [f64; 4]) -> f64 {
        self.w1 * components[0]
            + self.w2 * components[1]
            + self.w3 * components[2]
            + self.w4 * components[3]
    }
}

pub fn modality_code(modality: Modality) -> f64 {
    match modality {
        Modality::Video => 0.3,
        Modality::Audio => 0.5,
        Modality::Haptic => 1.0,
    }
}

/// Hand-weighted importance; smaller contents score higher.
pub fn static_importance(weights: &ImportanceWeights, obs: &Observation, norm: &NormConfig) -> f64 {
    weights.combine([
        norm.bandwidth(obs.available_access_bw_bps),
        popularity_share(obs.content_request_count, obs.node_total_requests),
        modality_code(obs.modality),
        1.0 - norm.size(obs.content_size),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub r1: f64,
    pub r2: f64,
    pub th1: f64,
    pub th2: f64,
    pub th3: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            r1: 10.0,
            r2: 5.0,
            th1: 0.05,
            th2: 0.10,
            th3: 0.20,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.r1 > self.r2
            && self.r2 > 0.0
            && 0.0 <= self.th1
            && self.th1 < self.th2
            && self.th2 < self.th3
            && self.th3 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "reward needs r1 > r2 > 0 and 0 <= th1 < th2 < th3 <= 1".into(),
            ))
        }
    }
}

/// Four right-closed bands over the unsatisfied ratio.
pub fn immediate_reward(ratio: f64, cfg: &RewardConfig) -> f64 {
    if ratio <= cfg.th1 {
        cfg.r1
    } else if ratio <= cfg.th2 {
        cfg.r2
    } else if ratio <= cfg.th3 {
        -cfg.r2
    } else {
        -cfg.r1
    }
}

/// Unsatisfied requests against per-episode request totals, plus the
/// running reward sum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RewardState {
    pub unsatisfied_count: u64,
    pub episode_request_totals: Vec<u64>,
    pub accumulated: f64,
}

impl RewardState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_episode(&mut self, requests: u64, unsatisfied: u64) {
        self.episode_request_totals.push(requests);
        self.unsatisfied_count += unsatisfied;
    }

    pub fn unsatisfied_ratio(&self) -> Result<f64> {
        let total: u64 = self.episode_request_totals.iter().sum();
        if total == 0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(self.unsatisfied_count as f64 / total as f64)
    }

    pub fn accumulate_reward(&mut self, immediate: f64) -> f64 {
        self.accumulated += immediate;
        self.accumulated
    }
}

pub fn unsatisfied_ratio(state: &RewardState) -> Result<f64> {
    state.unsatisfied_ratio()
}

pub fn accumulate_reward(state: &mut RewardState, immediate: f64) -> f64 {
    state.accumulate_reward(immediate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    pub period_slots: u32,
    /// A recent rate above `factor`× (or below 1/`factor`×) the reference
    /// rate counts as a jump.
    pub rate_jump_factor: f64,
    pub short_window_slots: u32,
    pub long_window_slots: u32,
    /// Minimum distance in slots between two rate-jump triggers.
    pub refractory_slots: u32,
    /// Poisson tail probability below which a recent count is considered
    /// inconsistent with the reference rate.
    pub rate_jump_p_value: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            period_slots: 60,
            rate_jump_factor: 2.0,
            short_window_slots: 10,
            long_window_slots: 60,
            refractory_slots: 30,
            rate_jump_p_value: 1e-6,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.period_slots == 0 || self.short_window_slots == 0 || self.long_window_slots == 0 {
            return Err(Error::Config("trigger windows must be positive".into()));
        }
        if !(self.rate_jump_factor > 1.0) {
            return Err(Error::Config("rate jump factor must exceed 1".into()));
        }
        if !(self.rate_jump_p_value > 0.0 && self.rate_jump_p_value < 1.0) {
            return Err(Error::Config("rate jump p-value must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerEvent {
    Released(ContentId),
    PatternShift,
    RateJump,
}

/// Request-rate history for on-demand triggering.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerState {
    config: TriggerConfig,
    history: VecDeque<u64>,
    last_jump: Option<u32>,
}

impl TriggerState {
    pub fn new(config: TriggerConfig) -> Self {
        TriggerState {
            config,
            history: VecDeque::new(),
            last_jump: None,
        }
    }

    pub fn config(&self) -> &TriggerConfig {
        &self.config
    }

    /// Records the request count of a finished slot.
    pub fn record_slot(&mut self, requests: u64) {
        self.history.push_back(requests);
        let keep = (self.config.short_window_slots + self.config.long_window_slots) as usize;
        while self.history.len() > keep {
            self.history.pop_front();
        }
    }

    /// Compares the latest short window against the long window before it.
    /// A jump also has to be at least four Poisson standard deviations away
    /// so that sampling noise alone does not fire it.
    pub fn rate_jump(&mut self, slot: u32) -> bool {
        let short = self.config.short_window_slots as usize;
        let long = self.config.long_window_slots as usize;
        if self.history.len() < short + long {
            return false;
        }
        if let Some(last) = self.last_jump {
            if slot.saturating_sub(last) < self.config.refractory_slots {
                return false;
            }
        }
        let reference: u64 = self.history.iter().take(long).sum();
        let recent: u64 = self.history.iter().skip(long).sum();
        let expected = reference as f64 * short as f64 / long as f64;
        let recent = recent as f64;
        let f = self.config.rate_jump_factor;
        let big = recent > f * expected || recent < expected / f;
        let significant =
            ln_poisson_tail(recent as u64, expected.max(1.0)) < self.config.rate_jump_p_value.ln();
        let jump = big && significant;
        if jump {
            self.last_jump = Some(slot);
        }
        jump
    }
}

/// Natural log of the Poisson(`lambda`) tail on the side of `k`:
/// P(X >= k) when k > lambda, P(X <= k) otherwise.
fn ln_poisson_tail(k: u64, lambda: f64) -> f64 {
    let ln_fact: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    let ln_pk = k as f64 * lambda.ln() - lambda - ln_fact;
    let mut sum = 1.0;
    let mut term = 1.0;
    if k as f64 > lambda {
        let mut j = k;
        loop {
            j += 1;
            term *= lambda / j as f64;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
    } else {
        let mut j = k;
        while j > 0 {
            term *= j as f64 / lambda;
            sum += term;
            j -= 1;
            if term < 1e-17 * sum {
                break;
            }
        }
    }
    ln_pk + sum.ln()
}

pub fn should_trigger(state: &TriggerState, slot: u32, events: &[TriggerEvent]) -> bool {
    slot % state.config.period_slots == 0 || !events.is_empty()
}

/// Per-node sliding window over the last `window_slots` finished slots:
/// request counts, unsatisfied counts and remaining access bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    window_slots: usize,
    nodes: Vec<NodeWindow>,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SlotSummary {
    requests: Vec<ContentId>,
    unsatisfied: u64,
    remaining_bw_bps: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct NodeWindow {
    access_capacity_bps: f64,
    current: SlotSummary,
    past: VecDeque<SlotSummary>,
    counts: HashMap<ContentId, u64>,
    total: u64,
    unsatisfied: u64,
    bw_sum: f64,
}

impl Observer {
    pub fn new(ledger: &SlotLedger, window_slots: u32) -> Self {
        let nodes = (0..ledger.num_nodes())
            .map(|n| NodeWindow {
                access_capacity_bps: ledger.access_capacity(NodeId(n as u32)),
                ..Default::default()
            })
            .collect();
        Observer {
            window_slots: window_slots.max(1) as usize,
            nodes,
        }
    }

    fn node(&self, node: NodeId) -> Result<&NodeWindow> {
        self.nodes.get(node.0 as usize).ok_or(Error::UnknownNode(node))
    }

    fn node_mut(&mut self, node: NodeId) -> Result<&mut NodeWindow> {
        self.nodes.get_mut(node.0 as usize).ok_or(Error::UnknownNode(node))
    }

    pub fn record_request(&mut self, node: NodeId, content: ContentId, satisfied: bool) -> Result<()> {
        let w = self.node_mut(node)?;
        w.current.requests.push(content);
        if !satisfied {
            w.current.unsatisfied += 1;
        }
        Ok(())
    }

    /// Closes the current slot, folding it into the window.
    pub fn end_slot(&mut self, ledger: &SlotLedger) {
        let window = self.window_slots;
        for (n, w) in self.nodes.iter_mut().enumerate() {
            let mut done = std::mem::take(&mut w.current);
            done.remaining_bw_bps = ledger.access_remaining(NodeId(n as u32));
            for c in &done.requests {
                *w.counts.entry(*c).or_default() += 1;
            }
            w.total += done.requests.len() as u64;
            w.unsatisfied += done.unsatisfied;
            w.bw_sum += done.remaining_bw_bps;
            w.past.push_back(done);
            while w.past.len() > window {
                let old = w.past.pop_front().unwrap();
                for c in &old.requests {
                    let e = w.counts.get_mut(c).unwrap();
                    *e -= 1;
                    if *e == 0 {
                        w.counts.remove(c);
                    }
                }
                w.total -= old.requests.len() as u64;
                w.unsatisfied -= old.unsatisfied;
                w.bw_sum -= old.remaining_bw_bps;
            }
        }
    }

    /// Mean remaining access bandwidth over the window; the full link rate
    /// before any slot has finished.
    pub fn available_bw(&self, node: NodeId) -> Result<f64> {
        let w = self.node(node)?;
        if w.past.is_empty() {
            Ok(w.access_capacity_bps)
        } else {
            Ok((w.bw_sum / w.past.len() as f64).clamp(0.0, w.access_capacity_bps))
        }
    }

    pub fn request_count(&self, node: NodeId, content: ContentId) -> Result<u64> {
        Ok(self.node(node)?.counts.get(&content).copied().unwrap_or(0))
    }

    pub fn node_total(&self, node: NodeId) -> Result<u64> {
        Ok(self.node(node)?.total)
    }

    /// Unsatisfied share of the node's windowed requests, if it had any.
    pub fn node_unsatisfied_ratio(&self, node: NodeId) -> Result<Option<f64>> {
        let w = self.node(node)?;
        Ok((w.total > 0).then(|| w.unsatisfied as f64 / w.total as f64))
    }

    /// Per-content request counts in the node's window.
    pub fn window_counts(&self, node: NodeId) -> Result<&HashMap<ContentId, u64>> {
        Ok(&self.node(node)?.counts)
    }

    pub fn observe(&self, catalog: &Catalog, node: NodeId, content: ContentId) -> Result<Observation> {
        let c = catalog.get(content).ok_or(Error::UnknownContent(content))?;
        Ok(Observation {
            node_id: node,
            content_id: content,
            available_access_bw_bps: self.available_bw(node)?,
            content_request_count: self.request_count(node, content)?,
            node_total_requests: self.node_total(node)?,
            modality: c.modality,
            content_size: c.size,
        })
    }
}

/// The latest distributed importance per (node, content).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<(NodeId, ContentId), ImportanceScore>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, score: ImportanceScore) {
        self.scores.insert((score.node_id, score.content_id), score);
    }

    pub fn get(&self, node: NodeId, content: ContentId) -> Option<&ImportanceScore> {
        self.scores.get(&(node, content))
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImportanceScore> {
        self.scores.values()
    }

    /// Header `slot,node_id,content_id,score`.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["slot", "node_id", "content_id", "score"])?;
        for s in self.scores.values() {
            w.write_record([
                s.issued_at.to_string(),
                s.node_id.0.to_string(),
                s.content_id.0.to_string(),
                s.value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
