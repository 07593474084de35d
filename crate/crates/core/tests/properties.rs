use std::collections::BTreeSet;

use mmcache_core::cache::CacheState;
use mmcache_core::catalog::ContentId;
use mmcache_core::harness::{generate_trace, replay_trace, run_episode, AgentMode};
use mmcache_core::workload::{read_trace_csv, write_trace_csv};
use mmcache_core::{ExperimentConfig, Scheme};
use proptest::prelude::*;

mod common;
use common::{reference_arrival, RefEntry};

fn arrivals() -> impl Strategy<Value = (Vec<u64>, u64, Vec<(usize, u32)>)> {
    (prop::collection::vec(1u64..=6, 6), 1u64..=15).prop_flat_map(|(sizes, cap)| {
        let seq = prop::collection::vec((0usize..6, 1u32..=5), 0..40);
        (Just(sizes), Just(cap), seq)
    })
}

proptest! {
    #[test]
    fn admission_matches_reference_on_long_sequences((sizes, cap, seq) in arrivals()) {
        let mut cache = CacheState::new(cap);
        let mut reference: Vec<RefEntry> = Vec::new();
        for (t, &(i, imp)) in seq.iter().enumerate() {
            let got = cache.on_content_arrival(ContentId(i as u32 + 1), sizes[i], f64::from(imp), t as u32);
            let want = reference_arrival(&mut reference, cap, i as u32, sizes[i], imp, t);
            let evicted: BTreeSet<u32> = got.evicted.iter().map(|c| c.0 - 1).collect();
            prop_assert_eq!((got.cached, evicted), want);
            prop_assert!(cache.used() <= cap);
            let held: BTreeSet<u32> = cache.entries().map(|e| e.content_id.0 - 1).collect();
            let expected: BTreeSet<u32> = reference.iter().map(|e| e.id).collect();
            prop_assert_eq!(held, expected);
        }
    }

    #[test]
    fn lru_hits_are_nested_across_capacities(
        sizes in prop::collection::vec(1u64..=8, 10),
        trace in prop::collection::vec(0usize..10, 1..200),
        small in 1u64..=20,
        extra in 0u64..=20,
    ) {
        let mut a = CacheState::new(small);
        let mut b = CacheState::new(small + extra);
        for (t, &i) in trace.iter().enumerate() {
            let id = ContentId(i as u32 + 1);
            let (ha, _) = a.stack_access(id, sizes[i], t as u32);
            let (hb, _) = b.stack_access(id, sizes[i], t as u32);
            prop_assert!(!ha || hb, "hit at {} but miss at {} (step {})", small, small + extra, t);
            let inner: BTreeSet<_> = a.entries().map(|e| e.content_id).collect();
            let outer: BTreeSet<_> = b.entries().map(|e| e.content_id).collect();
            prop_assert!(inner.is_subset(&outer));
        }
    }
}

#[test]
fn trace_file_replays_the_episode() {
    let mut config = ExperimentConfig::default();
    config.workload.horizon_slots = 240;
    let trace = generate_trace(&config, 8).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&trace, &mut buf).unwrap();
    let read = read_trace_csv(buf.as_slice()).unwrap();
    assert_eq!(read, trace);
    for scheme in [Scheme::Lce, Scheme::LruOnly, Scheme::StaticWeights, Scheme::CpDqn] {
        let direct = run_episode(&config, scheme, 8, 300_000_000, AgentMode::None).unwrap();
        let replayed = replay_trace(&config, scheme, 8, 300_000_000, AgentMode::None, &read).unwrap();
        assert_eq!(direct.counters, replayed.counters, "{scheme}");
    }
}

#[test]
fn episodes_do_not_depend_on_run_order() {
    let mut config = ExperimentConfig::default();
    config.workload.horizon_slots = 180;
    let first: Vec<_> = Scheme::ALL
        .iter()
        .map(|&s| run_episode(&config, s, 2, 500_000_000, AgentMode::None).unwrap().counters)
        .collect();
    let mut second: Vec<_> = Scheme::ALL
        .iter()
        .rev()
        .map(|&s| run_episode(&config, s, 2, 500_000_000, AgentMode::None).unwrap().counters)
        .collect();
    second.reverse();
    assert_eq!(first, second);
}
