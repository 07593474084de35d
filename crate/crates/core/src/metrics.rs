//! Hop, hit, reduced-load and unsatisfied-request ratios, cumulative and
//! windowed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::ContentId;
use crate::error::{Error, Result};
use crate::netmodel::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub slot: u32,
    pub node_id: NodeId,
    pub content_id: ContentId,
    pub hit: bool,
    pub hops: u32,
    pub bytes: u64,
    pub satisfied: bool,
}

/// Raw numerators and denominators.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub requests: u64,
    pub hits: u64,
    pub misses: u64,
    pub hops: u64,
    pub satisfied: u64,
    pub unsatisfied: u64,
    pub bytes_requested: u64,
    pub bytes_from_cache: u64,
}

impl Counters {
    pub fn add_event(&mut self, e: &EventRecord) {
        self.requests += 1;
        if e.hit {
            self.hits += 1;
            self.bytes_from_cache += e.bytes;
        } else {
            self.misses += 1;
        }
        self.hops += u64::from(e.hops);
        if e.satisfied {
            self.satisfied += 1;
        } else {
            self.unsatisfied += 1;
        }
        self.bytes_requested += e.bytes;
    }

    pub fn merge(&mut self, o: &Counters) {
        self.requests += o.requests;
        self.hits += o.hits;
        self.misses += o.misses;
        self.hops += o.hops;
        self.satisfied += o.satisfied;
        self.unsatisfied += o.unsatisfied;
        self.bytes_requested += o.bytes_requested;
        self.bytes_from_cache += o.bytes_from_cache;
    }

    /// Totals over totals.
    pub fn snapshot(&self) -> Result<MetricsSnapshot> {
        if self.requests == 0 {
            return Err(Error::ZeroDenominator);
        }
        let n = self.requests as f64;
        Ok(MetricsSnapshot {
            avg_hops: self.hops as f64 / n,
            hit_ratio: self.hits as f64 / n,
            reduced_load_ratio: if self.bytes_requested == 0 {
                0.0
            } else {
                self.bytes_from_cache as f64 / self.bytes_requested as f64
            },
            unsatisfied_ratio: self.unsatisfied as f64 / n,
            total_requests: self.requests,
        })
    }

    pub fn check_conservation(&self) -> Result<()> {
        if self.hits + self.misses != self.requests {
            return Err(Error::MetricsViolation(format!(
                "hits {} + misses {} != requests {}",
                self.hits, self.misses, self.requests
            )));
        }
        if self.satisfied + self.unsatisfied != self.requests {
            return Err(Error::MetricsViolation(format!(
                "satisfied {} + unsatisfied {} != requests {}",
                self.satisfied, self.unsatisfied, self.requests
            )));
        }
        if self.bytes_from_cache > self.bytes_requested {
            return Err(Error::MetricsViolation("cache bytes exceed requested bytes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub avg_hops: f64,
    pub hit_ratio: f64,
    pub reduced_load_ratio: f64,
    pub unsatisfied_ratio: f64,
    pub total_requests: u64,
}

impl MetricsSnapshot {
    pub fn miss_ratio(&self) -> f64 {
        1.0 - self.hit_ratio
    }
}

/// One non-overlapping window; `snapshot` is `None` when it saw no requests.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub window_index: u32,
    pub counters: Counters,
    pub snapshot: Option<MetricsSnapshot>,
}

/// Sums of per-(node, content, slot) fractions, each term dividing by that
/// cell's own request count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SummedFractions {
    pub avg_hops: f64,
    pub hit_ratio: f64,
    pub reduced_load_ratio: f64,
    pub unsatisfied_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsAccumulator {
    per_slot: Vec<Counters>,
    total: Counters,
    literal: Option<BTreeMap<(NodeId, ContentId, u32), Counters>>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also keeps per-(node, content, slot) cells for the summed-fraction
    /// variant.
    pub fn with_summed_fractions() -> Self {
        MetricsAccumulator {
            literal: Some(BTreeMap::new()),
            ..Self::default()
        }
    }

    pub fn record(&mut self, event: &EventRecord) {
        let s = event.slot as usize;
        if self.per_slot.len() <= s {
            self.per_slot.resize(s + 1, Counters::default());
        }
        self.per_slot[s].add_event(event);
        self.total.add_event(event);
        if let Some(cells) = &mut self.literal {
            cells
                .entry((event.node_id, event.content_id, event.slot))
                .or_default()
                .add_event(event);
        }
    }

    pub fn totals(&self) -> &Counters {
        &self.total
    }

    pub fn snapshot(&self) -> Result<MetricsSnapshot> {
        self.total.snapshot()
    }

    /// Counters per window of `window` slots over `horizon` slots.
    pub fn window_series(&self, window: u32, horizon: u32) -> Result<Vec<WindowMetrics>> {
        if window == 0 {
            return Err(Error::Config("window must be at least one slot".into()));
        }
        let last = (self.per_slot.len() as u32).max(horizon);
        let count = last.div_ceil(window);
        Ok((0..count)
            .map(|w| {
                let mut c = Counters::default();
                let lo = (w * window) as usize;
                let hi = (((w + 1) * window) as usize).min(self.per_slot.len());
                for s in self.per_slot.get(lo..hi.max(lo)).unwrap_or(&[]) {
                    c.merge(s);
                }
                WindowMetrics {
                    window_index: w,
                    snapshot: c.snapshot().ok(),
                    counters: c,
                }
            })
            .collect())
    }

    pub fn summed_fractions(&self) -> Option<SummedFractions> {
        let cells = self.literal.as_ref()?;
        let mut out = SummedFractions::default();
        for c in cells.values() {
            let n = c.requests as f64;
            out.avg_hops += c.hops as f64 / n;
            out.hit_ratio += c.hits as f64 / n;
            out.reduced_load_ratio += c.bytes_from_cache as f64 / n;
            out.unsatisfied_ratio += c.unsatisfied as f64 / n;
        }
        Some(out)
    }

    /// Conservation within the totals and between windows and totals.
    pub fn check_conservation(&self, window: u32, horizon: u32) -> Result<()> {
        self.total.check_conservation()?;
        let mut sum = Counters::default();
        for w in self.window_series(window, horizon)? {
            w.counters.check_conservation()?;
            sum.merge(&w.counters);
        }
        if sum != self.total {
            return Err(Error::MetricsViolation("window sums differ from totals".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(slot: u32, hit: bool, hops: u32, bytes: u64, satisfied: bool) -> EventRecord {
        EventRecord {
            slot,
            node_id: NodeId(0),
            content_id: ContentId(slot % 3),
            hit,
            hops,
            bytes,
            satisfied,
        }
    }

    #[test]
    fn hit_ratio_and_hops() {
        let mut m = MetricsAccumulator::new();
        for i in 0..10 {
            let hit = i < 4;
            m.record(&ev(i, hit, if hit { 1 } else { 5 }, 10, true));
        }
        let s = m.snapshot().unwrap();
        assert_eq!(s.hit_ratio, 0.4);
        assert!((s.avg_hops - 3.4).abs() < 1e-12);
        assert!((s.hit_ratio + s.miss_ratio() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_hit() {
        let mut m = MetricsAccumulator::new();
        m.record(&ev(0, true, 1, 1, true));
        assert_eq!((m.totals().hits, m.totals().requests), (1, 1));
    }

    #[test]
    fn reduced_load_counts_bytes() {
        let mut m = MetricsAccumulator::new();
        m.record(&ev(0, true, 1, 40_000_000, true));
        m.record(&ev(1, false, 5, 60_000_000, false));
        let s = m.snapshot().unwrap();
        assert_eq!(s.reduced_load_ratio, 0.4);
        assert_eq!(s.unsatisfied_ratio, 0.5);
    }

    #[test]
    fn empty_accumulator_errors() {
        assert!(MetricsAccumulator::new().snapshot().is_err());
    }

    #[test]
    fn windows_and_empty_marker() {
        let mut m = MetricsAccumulator::new();
        m.record(&ev(5, true, 1, 1, true));
        m.record(&ev(200, false, 5, 1, false));
        let w = m.window_series(60, 480).unwrap();
        assert_eq!(w.len(), 8);
        assert!(w[0].snapshot.is_some());
        assert!(w[1].snapshot.is_none());
        assert_eq!(w[3].counters.requests, 1);
        m.check_conservation(60, 480).unwrap();
        assert!(m.window_series(0, 480).is_err());
    }

    #[test]
    fn summed_fractions_literal() {
        let mut m = MetricsAccumulator::with_summed_fractions();
        // Two cells: (slot 0) 2 requests 1 hit; (slot 1) 1 request 1 hit.
        m.record(&ev(0, true, 1, 4, true));
        let mut e = ev(0, false, 5, 4, false);
        e.content_id = ContentId(0);
        m.record(&e);
        m.record(&ev(1, true, 1, 2, true));
        let f = m.summed_fractions().unwrap();
        assert_eq!(f.hit_ratio, 1.5);
        assert_eq!(f.avg_hops, 3.0 + 1.0);
        assert_eq!(f.reduced_load_ratio, 2.0 + 2.0);
        assert_eq!(f.unsatisfied_ratio, 0.5);
        assert!(MetricsAccumulator::new().summed_fractions().is_none());
    }

    proptest! {
        #[test]
        fn conservation_and_bounds(
            events in proptest::collection::vec((0u32..480, any::<bool>(), 1u64..1_000_000, any::<bool>()), 1..400),
            window in 1u32..100,
        ) {
            let mut m = MetricsAccumulator::new();
            for (slot, hit, bytes, sat) in events {
                m.record(&ev(slot, hit, if hit { 1 } else { 5 }, bytes, sat));
            }
            prop_assert!(m.check_conservation(window, 480).is_ok());
            let s = m.snapshot().unwrap();
            for r in [s.hit_ratio, s.reduced_load_ratio, s.unsatisfied_ratio] {
                prop_assert!((0.0..=1.0).contains(&r));
            }
            prop_assert!((1.0..=5.0).contains(&s.avg_hops));
        }
    }
}
