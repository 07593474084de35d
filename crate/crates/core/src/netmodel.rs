//! Edge nodes, per-slot link accounting and the QoS predicate.
//!
//! A request is served over the node's access link; a cache miss also
//! crosses the backbone to the origin. Each transfer gets
//! `min(max_bandwidth, remaining capacity on every traversed link)` for the
//! rest of the slot, first come first served. Latency is evaluated for the
//! first packet: propagation over every hop plus its serialization time.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{Content, Modality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    pub node_id: NodeId,
    pub access_bw_bps: f64,
    pub backbone_bw_bps: f64,
    pub cache_capacity_bytes: u64,
}

/// Packet size per modality; every content of a modality is split into
/// packets of this size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacketSizes {
    pub video_bytes: u64,
    pub audio_bytes: u64,
    pub haptic_bytes: u64,
}

impl Default for PacketSizes {
    fn default() -> Self {
        PacketSizes {
            video_bytes: 100_000,
            audio_bytes: 512,
            haptic_bytes: 64,
        }
    }
}

impl PacketSizes {
    pub fn for_modality(&self, modality: Modality) -> u64 {
        match modality {
            Modality::Video => self.video_bytes,
            Modality::Audio => self.audio_bytes,
            Modality::Haptic => self.haptic_bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    pub per_hop_delay_s: f64,
    /// Hops between an edge node and the origin.
    pub backbone_hops: u32,
    pub packets: PacketSizes,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            per_hop_delay_s: 0.25e-3,
            backbone_hops: 4,
            packets: PacketSizes::default(),
        }
    }
}

impl LinkModel {
    pub fn hops_for(&self, hit: bool) -> u32 {
        if hit {
            1
        } else {
            1 + self.backbone_hops
        }
    }
}

/// Remaining link capacity within the current slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLedger {
    access_capacity: Vec<f64>,
    access_remaining: Vec<f64>,
    backbone_capacity: f64,
    backbone_remaining: f64,
}

impl SlotLedger {
    /// Per-node access links plus a backbone pool shared by all nodes.
    pub fn new(nodes: &[EdgeNode], backbone_bw_bps: f64) -> Self {
        let access: Vec<f64> = nodes.iter().map(|n| n.access_bw_bps).collect();
        SlotLedger {
            access_remaining: access.clone(),
            access_capacity: access,
            backbone_capacity: backbone_bw_bps,
            backbone_remaining: backbone_bw_bps,
        }
    }

    /// Releases every allocation at the slot boundary.
    pub fn reset(&mut self) {
        self.access_remaining.clone_from(&self.access_capacity);
        self.backbone_remaining = self.backbone_capacity;
    }

    pub fn access_remaining(&self, node: NodeId) -> f64 {
        self.access_remaining[node.0 as usize]
    }

    pub fn access_capacity(&self, node: NodeId) -> f64 {
        self.access_capacity[node.0 as usize]
    }

    pub fn backbone_remaining(&self) -> f64 {
        self.backbone_remaining
    }

    pub fn backbone_capacity(&self) -> f64 {
        self.backbone_capacity
    }

    pub fn num_nodes(&self) -> usize {
        self.access_capacity.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServedFrom {
    EdgeCache,
    Origin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferOutcome {
    pub served_from: ServedFrom,
    pub allocated_bw_bps: f64,
    pub hops: u32,
    pub latency_s: f64,
    pub bandwidth_ok: bool,
    pub latency_ok: bool,
}

pub fn hops_for(model: &LinkModel, hit: bool) -> u32 {
    model.hops_for(hit)
}

/// Allocates bandwidth for one request and evaluates its QoS flags.
pub fn admit_transfer(
    ledger: &mut SlotLedger,
    model: &LinkModel,
    node: NodeId,
    content: &Content,
    hit: bool,
) -> TransferOutcome {
    let n = node.0 as usize;
    let mut allocated = content.qos.max_bandwidth_bps.min(ledger.access_remaining[n]);
    if !hit {
        allocated = allocated.min(ledger.backbone_remaining);
    }
    let allocated = allocated.max(0.0);
    ledger.access_remaining[n] = (ledger.access_remaining[n] - allocated).max(0.0);
    if !hit {
        ledger.backbone_remaining = (ledger.backbone_remaining - allocated).max(0.0);
    }

    let hops = model.hops_for(hit);
    let packet_bits = (model.packets.for_modality(content.modality).min(content.size) * 8) as f64;
    let latency_s = if allocated > 0.0 {
        f64::from(hops) * model.per_hop_delay_s + packet_bits / allocated
    } else {
        f64::INFINITY
    };
    TransferOutcome {
        served_from: if hit {
            ServedFrom::EdgeCache
        } else {
            ServedFrom::Origin
        },
        allocated_bw_bps: allocated,
        hops,
        latency_s,
        bandwidth_ok: allocated >= content.qos.min_bandwidth_bps,
        latency_ok: latency_s <= content.qos.max_latency_s,
    }
}

pub fn qos_satisfied(outcome: &TransferOutcome) -> bool {
    outcome.bandwidth_ok && outcome.latency_ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ContentId, ModalityClass, KB, MB};

    const GBPS: f64 = 1e9;

    fn nodes(k: usize) -> Vec<EdgeNode> {
        (0..k)
            .map(|i| EdgeNode {
                node_id: NodeId(i as u32),
                access_bw_bps: GBPS,
                backbone_bw_bps: 100.0 * GBPS,
                cache_capacity_bytes: 400 * MB,
            })
            .collect()
    }

    fn content(class: ModalityClass, size: u64) -> Content {
        Content::new(ContentId(1), class, size).unwrap()
    }

    #[test]
    fn haptic_hit_on_idle_link_meets_qos() {
        let mut ledger = SlotLedger::new(&nodes(1), 100.0 * GBPS);
        let model = LinkModel::default();
        let c = content(ModalityClass::HapticHighFidelity, 100 * KB);
        let out = admit_transfer(&mut ledger, &model, NodeId(0), &c, true);
        assert_eq!(out.allocated_bw_bps, 1e6);
        assert_eq!(out.hops, 1);
        // 0.25 ms propagation + 64 B * 8 / 1 Mb/s = 0.512 ms serialization.
        assert!((out.latency_s - 0.762e-3).abs() < 1e-12, "{}", out.latency_s);
        assert!(out.bandwidth_ok && out.latency_ok);
        assert!(qos_satisfied(&out));
        assert_eq!(ledger.access_remaining(NodeId(0)), GBPS - 1e6);
    }

    #[test]
    fn bandwidth_shortfall_is_flagged() {
        let node = EdgeNode {
            access_bw_bps: 100e6,
            ..nodes(1).remove(0)
        };
        let mut ledger = SlotLedger::new(&[node], 100.0 * GBPS);
        let c = content(ModalityClass::Video8k60, 200 * MB);
        let out = admit_transfer(&mut ledger, &LinkModel::default(), NodeId(0), &c, true);
        assert_eq!(out.allocated_bw_bps, 100e6);
        assert!(!out.bandwidth_ok);
        assert!(!qos_satisfied(&out));
        assert_eq!(ledger.access_remaining(NodeId(0)), 0.0);
    }

    #[test]
    fn a_miss_never_satisfies_high_fidelity_haptic() {
        let mut ledger = SlotLedger::new(&nodes(1), 100.0 * GBPS);
        let c = content(ModalityClass::HapticHighFidelity, 50 * KB);
        let out = admit_transfer(&mut ledger, &LinkModel::default(), NodeId(0), &c, false);
        assert_eq!(out.hops, 5);
        assert!(out.bandwidth_ok);
        // 1.25 ms of propagation alone exceeds the 1 ms bound.
        assert!(out.latency_s > 1.25e-3);
        assert!(!out.latency_ok);
        assert_eq!(ledger.backbone_remaining(), 100.0 * GBPS - 1e6);
    }

    #[test]
    fn hop_counts() {
        let model = LinkModel::default();
        assert_eq!(hops_for(&model, true), 1);
        assert_eq!(hops_for(&model, false), 5);
        let flat = LinkModel {
            backbone_hops: 0,
            ..model
        };
        assert_eq!(hops_for(&flat, false), 1);
    }

    #[test]
    fn qos_predicate_truth_table() {
        let base = TransferOutcome {
            served_from: ServedFrom::EdgeCache,
            allocated_bw_bps: 1.0,
            hops: 1,
            latency_s: 0.0,
            bandwidth_ok: true,
            latency_ok: true,
        };
        assert!(qos_satisfied(&base));
        assert!(!qos_satisfied(&TransferOutcome {
            latency_ok: false,
            ..base
        }));
        assert!(!qos_satisfied(&TransferOutcome {
            latency_ok: false,
            bandwidth_ok: false,
            ..base
        }));
    }

    #[test]
    fn reset_restores_capacity() {
        let mut ledger = SlotLedger::new(&nodes(2), 100.0 * GBPS);
        let c = content(ModalityClass::Video4k60, 100 * MB);
        admit_transfer(&mut ledger, &LinkModel::default(), NodeId(1), &c, false);
        assert!(ledger.access_remaining(NodeId(1)) < GBPS);
        ledger.reset();
        assert_eq!(ledger.access_remaining(NodeId(1)), GBPS);
        assert_eq!(ledger.backbone_remaining(), 100.0 * GBPS);
    }

    #[test]
    fn exhausted_link_gives_infinite_latency() {
        let node = EdgeNode {
            access_bw_bps: 10e6,
            ..nodes(1).remove(0)
        };
        let mut ledger = SlotLedger::new(&[node], 100.0 * GBPS);
        let c = content(ModalityClass::Video1080p30, 60 * MB);
        admit_transfer(&mut ledger, &LinkModel::default(), NodeId(0), &c, true);
        let out = admit_transfer(&mut ledger, &LinkModel::default(), NodeId(0), &c, true);
        assert_eq!(out.allocated_bw_bps, 0.0);
        assert!(out.latency_s.is_infinite());
        assert!(!out.latency_ok && !out.bandwidth_ok);
    }

    mod props {
        use proptest::prelude::*;

        use super::*;

        fn any_class() -> impl Strategy<Value = ModalityClass> {
            (0..ModalityClass::ALL.len()).prop_map(|i| ModalityClass::ALL[i])
        }

        proptest! {
            #[test]
            fn ledger_never_goes_negative_or_over(
                reqs in prop::collection::vec((any_class(), 0u32..3, any::<bool>()), 0..200),
                access in 1e6f64..2e9,
                backbone in 1e6f64..5e9,
            ) {
                let ns: Vec<EdgeNode> = (0..3).map(|i| EdgeNode {
                    node_id: NodeId(i),
                    access_bw_bps: access,
                    backbone_bw_bps: backbone,
                    cache_capacity_bytes: 1,
                }).collect();
                let mut ledger = SlotLedger::new(&ns, backbone);
                let model = LinkModel::default();
                let mut used = [0.0f64; 3];
                let mut backbone_used = 0.0;
                for (class, node, hit) in reqs {
                    let c = Content::new(ContentId(1), class, MB).unwrap();
                    let out = admit_transfer(&mut ledger, &model, NodeId(node), &c, hit);
                    used[node as usize] += out.allocated_bw_bps;
                    if !hit { backbone_used += out.allocated_bw_bps; }
                    prop_assert!(out.allocated_bw_bps >= 0.0);
                    prop_assert_eq!(out.bandwidth_ok, out.allocated_bw_bps >= c.qos.min_bandwidth_bps);
                }
                for (i, u) in used.iter().enumerate() {
                    prop_assert!(*u <= access * (1.0 + 1e-12));
                    prop_assert!(ledger.access_remaining(NodeId(i as u32)) >= 0.0);
                }
                prop_assert!(backbone_used <= backbone * (1.0 + 1e-12));
                prop_assert!(ledger.backbone_remaining() >= 0.0);
            }

            #[test]
            fn hits_are_never_slower_than_misses(
                class in any_class(),
                access in 1e3f64..2e9,
                backbone in 1e3f64..5e9,
            ) {
                let ns = vec![EdgeNode { node_id: NodeId(0), access_bw_bps: access, backbone_bw_bps: backbone, cache_capacity_bytes: 1 }];
                let c = Content::new(ContentId(1), class, MB).unwrap();
                let model = LinkModel::default();
                let hit = admit_transfer(&mut SlotLedger::new(&ns, backbone), &model, NodeId(0), &c, true);
                let miss = admit_transfer(&mut SlotLedger::new(&ns, backbone), &model, NodeId(0), &c, false);
                prop_assert!(hit.latency_s <= miss.latency_s);
                prop_assert!(hit.hops < miss.hops);
            }
        }
    }
}
