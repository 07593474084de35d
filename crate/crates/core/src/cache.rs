//! Per-node cache storage, importance-based admission and replacement, and
//! the baseline policies.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::catalog::ContentId;
use crate::error::{Error, Result};
use crate::netmodel::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub content_id: ContentId,
    pub size: u64,
    pub importance: f64,
    pub last_access: u32,
    pub inserted_at: u32,
    /// Monotone access counter; orders accesses within a slot.
    pub touch: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CacheDecision {
    pub cached: bool,
    pub evicted: Vec<ContentId>,
}

impl CacheDecision {
    fn rejected() -> Self {
        CacheDecision::default()
    }

    fn admitted(evicted: Vec<ContentId>) -> Self {
        CacheDecision {
            cached: true,
            evicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheState {
    capacity: u64,
    used: u64,
    entries: BTreeMap<ContentId, CacheEntry>,
    clock: u64,
    /// Recency stack (most recent first) for the stack-LRU policy.
    stack: Vec<(ContentId, u64)>,
}

impl CacheState {
    pub fn new(capacity: u64) -> Self {
        CacheState {
            capacity,
            used: 0,
            entries: BTreeMap::new(),
            clock: 0,
            stack: Vec::new(),
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn free(&self) -> u64 {
        self.capacity - self.used
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: ContentId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn get(&self, id: ContentId) -> Option<&CacheEntry> {
        self.entries.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CacheEntry> {
        self.entries.values()
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    /// Hit test; a hit refreshes recency.
    pub fn lookup(&mut self, id: ContentId, slot: u32) -> bool {
        if !self.contains(id) {
            return false;
        }
        let t = self.tick();
        let e = self.entries.get_mut(&id).unwrap();
        e.last_access = slot;
        e.touch = t;
        true
    }

    pub fn set_importance(&mut self, id: ContentId, importance: f64) -> bool {
        match self.entries.get_mut(&id) {
            Some(e) => {
                e.importance = importance;
                true
            }
            None => false,
        }
    }

    fn insert(&mut self, id: ContentId, size: u64, importance: f64, slot: u32) {
        let t = self.tick();
        self.used += size;
        self.entries.insert(
            id,
            CacheEntry {
                content_id: id,
                size,
                importance,
                last_access: slot,
                inserted_at: slot,
                touch: t,
            },
        );
    }

    fn remove(&mut self, id: ContentId) -> Option<CacheEntry> {
        let e = self.entries.remove(&id)?;
        self.used -= e.size;
        Some(e)
    }

    /// Entries by ascending importance, older access first on ties.
    fn importance_order(&self) -> Vec<&CacheEntry> {
        let mut v: Vec<&CacheEntry> = self.entries.values().collect();
        v.sort_by(|a, b| {
            a.importance
                .total_cmp(&b.importance)
                .then(a.last_access.cmp(&b.last_access))
                .then(a.touch.cmp(&b.touch))
                .then(a.content_id.cmp(&b.content_id))
        });
        v
    }

    fn recency_order(&self) -> Vec<&CacheEntry> {
        let mut v: Vec<&CacheEntry> = self.entries.values().collect();
        v.sort_by_key(|e| (e.last_access, e.touch, e.content_id));
        v
    }

    /// Victims that would free `needed` bytes: the shortest prefix of the
    /// importance order whose members all score below `incoming`. Returns
    /// the prefix and the bytes it frees, which fall short of `needed` when
    /// the walk hits an entry that is at least as important.
    pub fn plan_evictions(&self, needed: u64, incoming: f64) -> (Vec<ContentId>, u64) {
        let mut victims = Vec::new();
        let mut freed = 0;
        for e in self.importance_order() {
            if freed >= needed || e.importance >= incoming {
                break;
            }
            victims.push(e.content_id);
            freed += e.size;
        }
        (victims, freed)
    }

    /// Evicts along the importance order until `needed` bytes are freed or
    /// the next entry is at least as important as `incoming`.
    pub fn evict_until_fit(&mut self, needed: u64, incoming: f64) -> Vec<ContentId> {
        let (victims, _) = self.plan_evictions(needed, incoming);
        for v in &victims {
            self.remove(*v);
        }
        victims
    }

    /// Importance-based admission. A cached content only has its importance
    /// and recency refreshed. Evictions are planned first and applied only
    /// if the content then fits, so a rejection leaves the cache untouched.
    pub fn on_content_arrival(
        &mut self,
        id: ContentId,
        size: u64,
        importance: f64,
        slot: u32,
    ) -> CacheDecision {
        if self.contains(id) {
            self.lookup(id, slot);
            self.set_importance(id, importance);
            return CacheDecision::admitted(Vec::new());
        }
        if size > self.capacity {
            return CacheDecision::rejected();
        }
        if size <= self.free() {
            self.insert(id, size, importance, slot);
            return CacheDecision::admitted(Vec::new());
        }
        let needed = size - self.free();
        let (victims, freed) = self.plan_evictions(needed, importance);
        if freed < needed {
            return CacheDecision::rejected();
        }
        for v in &victims {
            self.remove(*v);
        }
        self.insert(id, size, importance, slot);
        CacheDecision::admitted(victims)
    }

    /// Admits unconditionally, evicting least-recently-used entries. Content
    /// larger than the whole cache is rejected without evictions.
    pub fn insert_lru(&mut self, id: ContentId, size: u64, importance: f64, slot: u32) -> CacheDecision {
        if self.contains(id) {
            self.lookup(id, slot);
            self.set_importance(id, importance);
            return CacheDecision::admitted(Vec::new());
        }
        if size > self.capacity {
            return CacheDecision::rejected();
        }
        let mut evicted = Vec::new();
        let order: Vec<ContentId> = self.recency_order().iter().map(|e| e.content_id).collect();
        for v in order {
            if size <= self.free() {
                break;
            }
            self.remove(v);
            evicted.push(v);
        }
        self.insert(id, size, importance, slot);
        CacheDecision::admitted(evicted)
    }

    /// Evicts the entry with the lowest importance (older first on ties)
    /// until `size` fits, then admits. Oversize content is rejected.
    pub fn insert_evicting_lowest(
        &mut self,
        id: ContentId,
        size: u64,
        importance: f64,
        slot: u32,
    ) -> CacheDecision {
        if self.contains(id) {
            self.lookup(id, slot);
            self.set_importance(id, importance);
            return CacheDecision::admitted(Vec::new());
        }
        if size > self.capacity {
            return CacheDecision::rejected();
        }
        let mut evicted = Vec::new();
        let order: Vec<ContentId> = self.importance_order().iter().map(|e| e.content_id).collect();
        for v in order {
            if size <= self.free() {
                break;
            }
            self.remove(v);
            evicted.push(v);
        }
        self.insert(id, size, importance, slot);
        CacheDecision::admitted(evicted)
    }

    /// Stack LRU: every access moves the content to the top of the recency
    /// stack and the cache holds the longest top segment that fits. Returns
    /// whether the access hit and the resulting change. Because the cached
    /// set at capacity `c` is always a prefix of the set at any larger
    /// capacity, hit sets are nested across capacities.
    pub fn stack_access(&mut self, id: ContentId, size: u64, slot: u32) -> (bool, CacheDecision) {
        let hit = self.lookup(id, slot);
        if let Some(pos) = self.stack.iter().position(|(c, _)| *c == id) {
            self.stack.remove(pos);
        }
        self.stack.insert(0, (id, size));
        let mut keep = Vec::new();
        let mut total = 0u64;
        for &(c, s) in &self.stack {
            if total + s > self.capacity {
                break;
            }
            total += s;
            keep.push(c);
        }
        let evicted: Vec<ContentId> = self
            .recency_order()
            .iter()
            .map(|e| e.content_id)
            .filter(|c| !keep.contains(c))
            .collect();
        for v in &evicted {
            self.remove(*v);
        }
        let cached = keep.first() == Some(&id);
        if cached && !hit {
            self.insert(id, size, 0.0, slot);
        }
        (hit, CacheDecision { cached, evicted })
    }

    /// Checks the bookkeeping and the capacity bound.
    pub fn check_invariants(&self, node: NodeId) -> Result<()> {
        let sum: u64 = self.entries.values().map(|e| e.size).sum();
        if sum != self.used || self.used > self.capacity {
            return Err(Error::CapacityViolation {
                node,
                used: sum,
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    /// Header `node_id,content_id,size_bytes,importance,last_access`.
    pub fn write_snapshot_csv<W: io::Write>(caches: &[(NodeId, &CacheState)], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["node_id", "content_id", "size_bytes", "importance", "last_access"])?;
        for (node, cache) in caches {
            for e in cache.entries() {
                w.write_record([
                    node.0.to_string(),
                    e.content_id.0.to_string(),
                    e.size.to_string(),
                    e.importance.to_string(),
                    e.last_access.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Admission rules that are not driven by a learned importance model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselinePolicy {
    /// Cache every content, LRU eviction.
    LceLru,
    /// Strict stack LRU.
    LruOnly,
    /// Windowed-popularity admission, LRU eviction.
    DpwcsLru,
    /// Per-content binary DQN admission, LRU eviction.
    CpDqnLru,
    /// Importance-based replacement driven by the static scorer.
    StaticScore,
}

/// What a baseline needs to know about one arrival.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalContext {
    pub content_id: ContentId,
    pub size: u64,
    pub slot: u32,
    /// Score for importance-driven policies.
    pub importance: f64,
    /// The content's request count in the popularity window.
    pub window_count: u64,
    /// Mean count over contents requested in the window.
    pub window_mean: f64,
    /// Cache/skip flag from the per-content DQN.
    pub admit: bool,
}

impl ArrivalContext {
    pub fn new(content_id: ContentId, size: u64, slot: u32) -> Self {
        ArrivalContext {
            content_id,
            size,
            slot,
            importance: 0.0,
            window_count: 0,
            window_mean: 0.0,
            admit: true,
        }
    }
}

/// Windowed-popularity admission test.
pub fn dpwcs_admits(window_count: u64, window_mean: f64) -> bool {
    window_count as f64 >= window_mean
}

pub fn baseline_decide(
    policy: BaselinePolicy,
    cache: &mut CacheState,
    ctx: &ArrivalContext,
) -> CacheDecision {
    let (id, size, slot) = (ctx.content_id, ctx.size, ctx.slot);
    match policy {
        BaselinePolicy::LceLru => cache.insert_lru(id, size, 0.0, slot),
        BaselinePolicy::LruOnly => cache.stack_access(id, size, slot).1,
        BaselinePolicy::DpwcsLru => {
            if dpwcs_admits(ctx.window_count, ctx.window_mean) || cache.contains(id) {
                cache.insert_lru(id, size, 0.0, slot)
            } else {
                CacheDecision::rejected()
            }
        }
        BaselinePolicy::CpDqnLru => {
            if ctx.admit || cache.contains(id) {
                cache.insert_lru(id, size, 0.0, slot)
            } else {
                CacheDecision::rejected()
            }
        }
        BaselinePolicy::StaticScore => cache.on_content_arrival(id, size, ctx.importance, slot),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: ContentId = ContentId(0);
    const B: ContentId = ContentId(1);
    const C: ContentId = ContentId(2);
    const D: ContentId = ContentId(3);

    fn filled(capacity: u64, items: &[(ContentId, u64, f64)]) -> CacheState {
        let mut c = CacheState::new(capacity);
        for (slot, &(id, size, imp)) in items.iter().enumerate() {
            assert!(c.on_content_arrival(id, size, imp, slot as u32).cached);
        }
        c
    }

    #[test]
    fn lookup_hits_and_misses() {
        let mut c = filled(100, &[(A, 10, 1.0)]);
        assert!(c.lookup(A, 5));
        assert_eq!(c.get(A).unwrap().last_access, 5);
        assert!(c.lookup(A, 5));
        assert!(!c.lookup(B, 5));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn admits_directly_when_space_allows() {
        let mut c = CacheState::new(100_000_000);
        let d = c.on_content_arrival(A, 50_000_000, 0.0, 0);
        assert_eq!(d, CacheDecision::admitted(vec![]));
    }

    #[test]
    fn loses_to_more_important_entries() {
        let mut c = filled(100, &[(A, 30, 2.0), (B, 30, 5.0), (C, 40, 8.0)]);
        let before = c.clone();
        let d = c.on_content_arrival(D, 10, 1.0, 9);
        assert_eq!(d, CacheDecision::rejected());
        assert_eq!(c, before);
    }

    #[test]
    fn hand_traced_replacement() {
        let mut c = filled(100, &[(A, 40, 1.0), (B, 40, 3.0), (C, 20, 9.0)]);
        let d = c.on_content_arrival(D, 70, 5.0, 9);
        assert_eq!(d, CacheDecision::admitted(vec![A, B]));
        assert_eq!(c.used(), 90);
        assert!(c.contains(C) && c.contains(D));
    }

    #[test]
    fn insufficient_victims_roll_back() {
        // A and B score below 5 but free only 60 of the 70 needed.
        let mut c = filled(100, &[(A, 30, 1.0), (B, 30, 3.0), (C, 40, 9.0)]);
        let before = c.clone();
        assert_eq!(c.on_content_arrival(D, 70, 5.0, 9), CacheDecision::rejected());
        assert_eq!(c, before);
    }

    #[test]
    fn oversize_rejected_without_eviction() {
        let mut c = filled(100, &[(A, 30, 1.0)]);
        let before = c.clone();
        assert!(!c.on_content_arrival(B, 101, 9.0, 1).cached);
        assert!(!c.insert_lru(B, 101, 0.0, 1).cached);
        assert_eq!(c, before);
    }

    #[test]
    fn rearrival_refreshes_importance() {
        let mut c = filled(100, &[(A, 30, 1.0)]);
        let d = c.on_content_arrival(A, 30, 7.0, 4);
        assert!(d.cached && d.evicted.is_empty());
        assert_eq!(c.get(A).unwrap().importance, 7.0);
        assert_eq!(c.get(A).unwrap().last_access, 4);
        assert_eq!(c.used(), 30);
    }

    #[test]
    fn eviction_prefix_and_ties() {
        let mut c = filled(100, &[(A, 10, 1.0), (B, 10, 2.0), (C, 10, 3.0)]);
        assert_eq!(c.evict_until_fit(15, 9.0), vec![A, B]);
        let mut c = filled(100, &[(A, 10, 2.0), (B, 10, 2.0)]);
        c.lookup(A, 10);
        assert_eq!(c.evict_until_fit(5, 9.0), vec![B]);
        assert!(c.evict_until_fit(0, 9.0).is_empty());
        let mut c = filled(100, &[(A, 10, 4.0)]);
        assert!(c.evict_until_fit(5, 4.0).is_empty());
    }

    #[test]
    fn lce_evicts_least_recent() {
        let mut c = CacheState::new(30);
        for (i, id) in [A, B, C].into_iter().enumerate() {
            baseline_decide(BaselinePolicy::LceLru, &mut c, &ArrivalContext::new(id, 10, i as u32));
        }
        c.lookup(A, 3);
        let d = baseline_decide(BaselinePolicy::LceLru, &mut c, &ArrivalContext::new(D, 10, 4));
        assert_eq!(d, CacheDecision::admitted(vec![B]));
    }

    #[test]
    fn dpwcs_mean_threshold() {
        // Window counts {x: 5, y: 1}, mean 3.
        assert!(dpwcs_admits(5, 3.0));
        assert!(!dpwcs_admits(1, 3.0));
        let mut c = CacheState::new(100);
        let mut ctx = ArrivalContext::new(A, 10, 0);
        ctx.window_count = 5;
        ctx.window_mean = 3.0;
        assert!(baseline_decide(BaselinePolicy::DpwcsLru, &mut c, &ctx).cached);
        ctx.content_id = B;
        ctx.window_count = 1;
        assert!(!baseline_decide(BaselinePolicy::DpwcsLru, &mut c, &ctx).cached);
    }

    #[test]
    fn cp_dqn_follows_flag() {
        let mut c = CacheState::new(100);
        let mut ctx = ArrivalContext::new(A, 10, 0);
        ctx.admit = false;
        assert!(!baseline_decide(BaselinePolicy::CpDqnLru, &mut c, &ctx).cached);
        ctx.admit = true;
        assert!(baseline_decide(BaselinePolicy::CpDqnLru, &mut c, &ctx).cached);
    }

    #[test]
    fn stack_lru_oversize_flushes() {
        let mut c = CacheState::new(30);
        c.stack_access(A, 10, 0);
        c.stack_access(B, 10, 1);
        let (hit, d) = c.stack_access(C, 40, 2);
        assert!(!hit && !d.cached);
        assert!(c.is_empty());
        // A fits again once it is the most recent.
        let (hit, d) = c.stack_access(A, 10, 3);
        assert!(!hit && d.cached);
    }

    #[test]
    fn snapshot_csv() {
        let c = filled(100, &[(B, 10, 2.0), (A, 20, 1.5)]);
        let mut buf = Vec::new();
        CacheState::write_snapshot_csv(&[(NodeId(1), &c)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "node_id,content_id,size_bytes,importance,last_access\n1,0,20,1.5,1\n1,1,10,2,0\n"
        );
    }

    #[derive(Debug, Clone)]
    enum Op {
        Arrive(usize, u8),
        Lru(usize),
        Lowest(usize, u8),
        Stack(usize),
        Lookup(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0usize..12, 0u8..10).prop_map(|(i, m)| Op::Arrive(i, m)),
            (0usize..12).prop_map(Op::Lru),
            (0usize..12, 0u8..10).prop_map(|(i, m)| Op::Lowest(i, m)),
            (0usize..12).prop_map(Op::Stack),
            (0usize..12).prop_map(Op::Lookup),
        ]
    }

    proptest! {
        #[test]
        fn capacity_never_exceeded(
            cap in 0u64..150,
            sizes in proptest::collection::vec(1u64..60, 12),
            ops in proptest::collection::vec(op(), 1..80),
        ) {
            let mut c = CacheState::new(cap);
            for (slot, o) in ops.into_iter().enumerate() {
                let slot = slot as u32;
                let before = c.clone();
                let id = |i: usize| ContentId(i as u32);
                match o {
                    Op::Arrive(i, m) => {
                        let d = c.on_content_arrival(id(i), sizes[i], f64::from(m), slot);
                        if !d.cached {
                            prop_assert!(d.evicted.is_empty());
                            prop_assert_eq!(&c, &before);
                        }
                    }
                    Op::Lru(i) => { c.insert_lru(id(i), sizes[i], 0.0, slot); }
                    Op::Lowest(i, m) => { c.insert_evicting_lowest(id(i), sizes[i], f64::from(m), slot); }
                    Op::Stack(i) => { c.stack_access(id(i), sizes[i], slot); }
                    Op::Lookup(i) => { c.lookup(id(i), slot); }
                }
                prop_assert!(c.check_invariants(NodeId(0)).is_ok());
            }
        }
    }
}
