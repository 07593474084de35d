//! Time-varying request generation.
//!
//! Arrivals per node and slot are Poisson around a piecewise-constant
//! phase rate (idle and peak periods). Content choice follows a Zipf law
//! over a rank assignment that can be permuted at scheduled slots; newly
//! released contents enter the ranking in its top third.

use std::collections::BTreeMap;
use std::io;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ContentId, ModalityClass, SizeRanges};
use crate::error::{Error, Result};
use crate::netmodel::NodeId;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Request {
    pub slot: u32,
    pub node_id: NodeId,
    pub content_id: ContentId,
    pub arrival_order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start_slot: u32,
    /// Mean requests per slot per node.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternShift {
    pub slot: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledRelease {
    pub slot: u32,
    pub modality_class: ModalityClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub slot_length_s: f64,
    pub horizon_slots: u32,
    pub phases: Vec<Phase>,
    pub zipf_exponent: f64,
    /// Seed of the initial rank-to-content assignment. It belongs to the
    /// profile, so every episode drawn from one profile sees the same
    /// popularity ranking until a scheduled shift.
    pub rank_seed: u64,
    #[serde(default)]
    pub shifts: Vec<PatternShift>,
    #[serde(default)]
    pub releases: Vec<ScheduledRelease>,
}

impl Default for WorkloadProfile {
    fn default() -> Self {
        WorkloadProfile {
            slot_length_s: 1.0,
            horizon_slots: 480,
            phases: vec![
                Phase { start_slot: 0, rate: 2.0 },
                Phase { start_slot: 120, rate: 12.0 },
                Phase { start_slot: 240, rate: 4.0 },
                Phase { start_slot: 360, rate: 10.0 },
            ],
            zipf_exponent: 0.8,
            rank_seed: 7,
            shifts: vec![PatternShift { slot: 240, seed: 1 }],
            releases: Vec::new(),
        }
    }
}

impl WorkloadProfile {
    /// Same phases and popularity, no shifts or releases.
    pub fn stationary(&self) -> Self {
        WorkloadProfile {
            shifts: Vec::new(),
            releases: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidProfile(msg));
        if self.horizon_slots == 0 {
            return bad("horizon must be at least one slot".into());
        }
        if !(self.slot_length_s > 0.0) {
            return bad(format!("slot length {} must be positive", self.slot_length_s));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad(format!("zipf exponent {} must be >= 0", self.zipf_exponent));
        }
        match self.phases.first() {
            None => return bad("at least one phase is required".into()),
            Some(p) if p.start_slot != 0 => return bad("first phase must start at slot 0".into()),
            _ => {}
        }
        for w in self.phases.windows(2) {
            if w[1].start_slot <= w[0].start_slot {
                return bad("phases must be strictly ordered by start slot".into());
            }
        }
        if let Some(p) = self.phases.iter().find(|p| !(p.rate >= 0.0 && p.rate.is_finite())) {
            return bad(format!("phase rate {} must be finite and >= 0", p.rate));
        }
        Ok(())
    }

    /// Expected request count per node over the whole horizon.
    pub fn expected_requests_per_node(&self) -> f64 {
        (0..self.horizon_slots)
            .map(|s| self.arrival_rate(s).unwrap_or(0.0))
            .sum()
    }

    /// Phase rate in effect at `slot`.
    pub fn arrival_rate(&self, slot: u32) -> Result<f64> {
        if slot >= self.horizon_slots {
            return Err(Error::SlotOutOfHorizon {
                slot,
                horizon: self.horizon_slots,
            });
        }
        Ok(self
            .phases
            .iter()
            .take_while(|p| p.start_slot <= slot)
            .last()
            .map_or(0.0, |p| p.rate))
    }

    pub fn shift_at(&self, slot: u32) -> Option<&PatternShift> {
        self.shifts.iter().find(|s| s.slot == slot)
    }

    pub fn releases_at(&self, slot: u32) -> impl Iterator<Item = &ScheduledRelease> {
        self.releases.iter().filter(move |r| r.slot == slot)
    }
}

/// Unnormalized Zipf weights `rank^-s` for ranks `1..=n`.
pub fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-exponent)).collect()
}

/// Popularity ranking shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadState {
    ranks: Vec<ContentId>,
    cdf: Vec<f64>,
    exponent: f64,
}

impl WorkloadState {
    pub fn new(profile: &WorkloadProfile, catalog: &Catalog) -> Self {
        let mut ranks: Vec<ContentId> = catalog.ids().collect();
        ranks.shuffle(&mut rng::stream(profile.rank_seed, "ranks"));
        let mut state = WorkloadState {
            ranks,
            cdf: Vec::new(),
            exponent: profile.zipf_exponent,
        };
        state.rebuild_cdf();
        state
    }

    fn rebuild_cdf(&mut self) {
        let weights = zipf_weights(self.ranks.len(), self.exponent);
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        self.cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
    }

    /// Content ids ordered from most to least popular.
    pub fn ranking(&self) -> &[ContentId] {
        &self.ranks
    }

    pub fn rank_probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn probability_of(&self, id: ContentId) -> f64 {
        let probs = self.rank_probabilities();
        self.ranks
            .iter()
            .position(|&c| c == id)
            .map_or(0.0, |i| probs[i])
    }

    pub fn draw_content<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<ContentId> {
        if self.ranks.is_empty() {
            return None;
        }
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.ranks.len() - 1);
        Some(self.ranks[i])
    }

    /// Permutes the rank assignment if a shift is scheduled at `slot`.
    /// Returns whether a shift happened.
    pub fn shift_pattern(&mut self, profile: &WorkloadProfile, slot: u32) -> bool {
        let Some(shift) = profile.shift_at(slot) else {
            return false;
        };
        self.ranks.shuffle(&mut rng::stream(shift.seed, "shift"));
        true
    }

    /// Places a new content at a rank drawn uniformly from the top third.
    pub fn insert_release<R: Rng + ?Sized>(&mut self, id: ContentId, rng: &mut R) {
        let top = self.ranks.len().div_ceil(3).max(1);
        let pos = rng.random_range(0..top).min(self.ranks.len());
        self.ranks.insert(pos, id);
        self.rebuild_cdf();
    }
}

/// Draws one node's requests for one slot.
pub fn sample_requests(
    profile: &WorkloadProfile,
    state: &WorkloadState,
    node_id: NodeId,
    slot: u32,
    rng: &mut SimRng,
) -> Result<Vec<Request>> {
    let rate = profile.arrival_rate(slot)?;
    if rate == 0.0 {
        return Ok(Vec::new());
    }
    if state.ranks.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    let count = Poisson::new(rate)
        .map_err(|e| Error::InvalidProfile(e.to_string()))?
        .sample(rng) as u32;
    let mut out = Vec::with_capacity(count as usize);
    for arrival_order in 0..count {
        let content_id = state.draw_content(rng).ok_or(Error::EmptyCatalog)?;
        out.push(Request {
            slot,
            node_id,
            content_id,
            arrival_order,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadEvent {
    Released(ContentId),
    PatternShift,
}

/// Owns the generator state for one episode: popularity ranking, scheduled
/// shifts and releases, and the request stream.
#[derive(Debug, Clone)]
pub struct WorkloadDriver {
    profile: WorkloadProfile,
    state: WorkloadState,
    size_ranges: SizeRanges,
    requests_rng: SimRng,
    release_rng: SimRng,
}

impl WorkloadDriver {
    pub fn new(
        profile: WorkloadProfile,
        catalog: &Catalog,
        size_ranges: SizeRanges,
        seed: u64,
    ) -> Result<Self> {
        profile.validate()?;
        let state = WorkloadState::new(&profile, catalog);
        Ok(WorkloadDriver {
            profile,
            state,
            size_ranges,
            requests_rng: rng::stream(seed, "requests"),
            release_rng: rng::stream(seed, "releases"),
        })
    }

    pub fn profile(&self) -> &WorkloadProfile {
        &self.profile
    }

    pub fn state(&self) -> &WorkloadState {
        &self.state
    }

    /// Applies the shift and releases scheduled for `slot`.
    pub fn begin_slot(&mut self, slot: u32, catalog: &mut Catalog) -> Result<Vec<WorkloadEvent>> {
        let mut events = Vec::new();
        if self.state.shift_pattern(&self.profile, slot) {
            events.push(WorkloadEvent::PatternShift);
        }
        let releases: Vec<ScheduledRelease> = self.profile.releases_at(slot).copied().collect();
        for release in releases {
            let size = self
                .size_ranges
                .sample(release.modality_class.modality(), &mut self.release_rng);
            let content = catalog.release_content(release.modality_class, size, slot)?;
            self.state.insert_release(content.id, &mut self.release_rng);
            events.push(WorkloadEvent::Released(content.id));
        }
        Ok(events)
    }

    pub fn requests(&mut self, node_id: NodeId, slot: u32) -> Result<Vec<Request>> {
        sample_requests(&self.profile, &self.state, node_id, slot, &mut self.requests_rng)
    }
}

/// Number of requests in a trace.
pub fn total_requests(trace: &[Request]) -> u64 {
    trace.len() as u64
}

/// Per (node, content, slot) request counts.
pub fn request_counts(trace: &[Request]) -> BTreeMap<(NodeId, ContentId, u32), u64> {
    let mut counts = BTreeMap::new();
    for r in trace {
        *counts.entry((r.node_id, r.content_id, r.slot)).or_insert(0) += 1;
    }
    counts
}

pub fn write_trace_csv<W: io::Write>(trace: &[Request], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["slot", "node_id", "content_id", "arrival_order"])?;
    for r in trace {
        w.write_record([
            r.slot.to_string(),
            r.node_id.to_string(),
            r.content_id.to_string(),
            r.arrival_order.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV and returns it in processing order.
pub fn read_trace_csv<R: io::Read>(reader: R) -> Result<Vec<Request>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut trace = Vec::new();
    for record in r.records() {
        let record = record?;
        let num = |i: usize| -> Result<u32> {
            let v = record.get(i).unwrap_or_default();
            v.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad trace field `{v}`")))
        };
        trace.push(Request {
            slot: num(0)?,
            node_id: NodeId(num(1)?),
            content_id: ContentId(num(2)?),
            arrival_order: num(3)?,
        });
    }
    trace.sort_by_key(|r| (r.slot, r.node_id, r.arrival_order));
    Ok(trace)
}
