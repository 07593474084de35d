//! Fixtures shared by the benchmarks.

use mmcache_core::drl::{DqnConfig, NetworkShape, QNetwork, Transition};
use mmcache_core::rng;
use mmcache_core::CacheState;
use mmcache_core::ContentId;

use rand::Rng;

/// The default importance network: 7 inputs, two hidden layers, 10 levels.
pub fn importance_network(seed: u64) -> QNetwork {
    let shape = DqnConfig::default().shape(7, 10, true);
    QNetwork::new(shape, &mut rng::stream(seed, "bench-net"))
}

pub fn random_transitions(shape: &NetworkShape, n: usize, seed: u64) -> Vec<Transition> {
    let mut r = rng::stream(seed, "bench-batch");
    (0..n)
        .map(|_| Transition {
            state: (0..shape.input_dim).map(|_| r.random()).collect(),
            action: r.random_range(0..shape.actions),
            reward: r.random_range(-10.0..10.0),
            next_state: (0..shape.input_dim).map(|_| r.random()).collect(),
            terminal: r.random_bool(0.1),
        })
        .collect()
}

/// A cache filled to capacity with `n` unit-size entries of rising importance.
pub fn full_cache(n: u32) -> CacheState {
    let mut c = CacheState::new(u64::from(n));
    for i in 0..n {
        c.on_content_arrival(ContentId(i), 1, f64::from(i % 10), i);
    }
    c
}
