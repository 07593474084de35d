//! Independent reference models shared by the integration targets.

use std::collections::BTreeSet;

#[derive(Clone)]
pub struct RefEntry {
    pub id: u32,
    pub size: u64,
    pub importance: u32,
    pub last: usize,
}

/// Reference admission: the shortest importance-ascending prefix (ties by
/// recency) of entries less important than the newcomer that frees enough
/// space.
pub fn reference_arrival(
    cache: &mut Vec<RefEntry>,
    cap: u64,
    id: u32,
    size: u64,
    importance: u32,
    t: usize,
) -> (bool, BTreeSet<u32>) {
    if let Some(e) = cache.iter_mut().find(|e| e.id == id) {
        e.importance = importance;
        e.last = t;
        return (true, BTreeSet::new());
    }
    if size > cap {
        return (false, BTreeSet::new());
    }
    let used: u64 = cache.iter().map(|e| e.size).sum();
    let mut order = cache.clone();
    order.sort_by_key(|e| (e.importance, e.last));
    for k in 0..=order.len() {
        let prefix = &order[..k];
        if prefix.iter().any(|e| e.importance >= importance) {
            break;
        }
        let freed: u64 = prefix.iter().map(|e| e.size).sum();
        if used - freed + size <= cap {
            let gone: BTreeSet<u32> = prefix.iter().map(|e| e.id).collect();
            cache.retain(|e| !gone.contains(&e.id));
            cache.push(RefEntry {
                id,
                size,
                importance,
                last: t,
            });
            return (true, gone);
        }
    }
    (false, BTreeSet::new())
}
