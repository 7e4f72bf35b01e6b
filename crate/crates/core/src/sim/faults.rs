//! Crash-fault injection and initial buffer occupancy.

use rand::seq::index::sample;
use rand::Rng;

use crate::model::{Millis, NodeId};
use crate::topology::Topology;

/// Picks `⌊ratio · (N - 2)⌋` nodes other than the source and sink uniformly
/// without replacement; all crash at time 0. Sorted by id.
pub fn inject_faults<R: Rng + ?Sized>(topo: &Topology, ratio: f64, rng: &mut R) -> Vec<(NodeId, Millis)> {
    let pool: Vec<NodeId> = topo
        .node_ids()
        .filter(|&id| id != topo.source() && id != topo.sink())
        .collect();
    let count = ((ratio.clamp(0.0, 1.0) * pool.len() as f64).floor() as usize).min(pool.len());
    let mut chosen: Vec<NodeId> = sample(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|id| (id, 0.0)).collect()
}

/// Initial occupancy in bytes for every id: `fill · capacity` at
/// intermediate nodes, zero at the endpoints and carved ids.
pub fn preload_buffers(topo: &Topology, fill_ratio: f64, capacity_bytes: u32) -> Vec<u32> {
    let bytes = (fill_ratio.clamp(0.0, 1.0) * f64::from(capacity_bytes)).round() as u32;
    let mut out = vec![0; topo.id_capacity()];
    for id in topo.node_ids() {
        if id != topo.source() && id != topo.sink() {
            out[id.index()] = bytes;
        }
    }
    out
}
