//! Comparison forwarders: greedy minimum-delay, greedy maximum-speed and a
//! greedy forwarder with perimeter bypass around voids.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::model::{CandidateEntry, Millis, NodeId, Packet, RateClass};
use crate::protocol::{DropReason, ForwardDecision};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BaselineKind {
    GreedyMinDelay,
    GreedyMaxRate,
    Bypass,
}

/// Baselines carry no rate labels.
const RATE: RateClass = RateClass::Medium;

fn forward(next: NodeId) -> ForwardDecision {
    ForwardDecision::Forward { next, rate: RATE }
}

fn drop(reason: DropReason) -> ForwardDecision {
    ForwardDecision::Drop { reason }
}

/// FCS member with the smallest delay estimate; ties go to the larger
/// progress, then the smaller id. Cached states are ignored.
pub fn greedy_min_delay(
    topo: &Topology,
    node: NodeId,
    fcs: &[CandidateEntry],
    packet: &Packet,
    now: Millis,
) -> ForwardDecision {
    if packet.remaining_time(now) <= 0.0 {
        return drop(DropReason::Expired);
    }
    fcs.iter()
        .min_by(|a, b| {
            a.delay_est
                .total_cmp(&b.delay_est)
                .then_with(|| topo.progress(node, b.candidate).total_cmp(&topo.progress(node, a.candidate)))
                .then(a.candidate.cmp(&b.candidate))
        })
        .map_or(drop(DropReason::NoRoute), |e| forward(e.candidate))
}

fn speed(topo: &Topology, node: NodeId, e: &CandidateEntry) -> f64 {
    let progress = topo.progress(node, e.candidate);
    if e.delay_est > 0.0 {
        progress / e.delay_est
    } else {
        f64::INFINITY
    }
}

/// FCS member maximising progress per unit of estimated delay; ties go to
/// the smaller id.
pub fn greedy_max_rate(
    topo: &Topology,
    node: NodeId,
    fcs: &[CandidateEntry],
    packet: &Packet,
    now: Millis,
) -> ForwardDecision {
    if packet.remaining_time(now) <= 0.0 {
        return drop(DropReason::Expired);
    }
    fcs.iter()
        .max_by(|a, b| {
            speed(topo, node, a)
                .total_cmp(&speed(topo, node, b))
                .then(b.candidate.cmp(&a.candidate))
        })
        .map_or(drop(DropReason::NoRoute), |e| forward(e.candidate))
}

/// Counter-clockwise angle from the bearing `node -> sink` to `node -> to`,
/// in `[0, 2π)`.
fn ccw_deviation(topo: &Topology, node: NodeId, to: NodeId) -> f64 {
    let p = topo.position(node).expect("node present");
    let s = topo.position(topo.sink()).expect("sink present");
    let q = topo.position(to).expect("neighbour present");
    let base = (s.y - p.y).atan2(s.x - p.x);
    let a = (q.y - p.y).atan2(q.x - p.x);
    (a - base).rem_euclid(TAU)
}

/// Greedy maximum progress over unvisited FCS members. With none left the
/// packet follows the perimeter: the unvisited neighbour reached first when
/// sweeping counter-clockwise from the sink bearing. Revisits and dead ends
/// drop the packet.
pub fn bypass_next_hop(
    topo: &Topology,
    node: NodeId,
    fcs: &[CandidateEntry],
    neighbors: &[NodeId],
    packet: &Packet,
    now: Millis,
) -> ForwardDecision {
    if packet.remaining_time(now) <= 0.0 {
        return drop(DropReason::Expired);
    }
    let visits = packet.hop_trace.iter().filter(|&&n| n == node).count();
    if visits > 1 {
        return drop(DropReason::NoRoute);
    }
    let greedy = fcs
        .iter()
        .filter(|e| !packet.has_visited(e.candidate))
        .max_by(|a, b| {
            topo.progress(node, a.candidate)
                .total_cmp(&topo.progress(node, b.candidate))
                .then(b.candidate.cmp(&a.candidate))
        });
    if let Some(e) = greedy {
        return forward(e.candidate);
    }
    neighbors
        .iter()
        .copied()
        .filter(|&n| !packet.has_visited(n))
        .min_by(|&a, &b| {
            ccw_deviation(topo, node, a)
                .total_cmp(&ccw_deviation(topo, node, b))
                .then(a.cmp(&b))
        })
        .map_or(drop(DropReason::NoRoute), forward)
}

pub fn baseline_next_hop(
    kind: BaselineKind,
    topo: &Topology,
    node: NodeId,
    fcs: &[CandidateEntry],
    neighbors: &[NodeId],
    packet: &Packet,
    now: Millis,
) -> ForwardDecision {
    match kind {
        BaselineKind::GreedyMinDelay => greedy_min_delay(topo, node, fcs, packet, now),
        BaselineKind::GreedyMaxRate => greedy_max_rate(topo, node, fcs, packet, now),
        BaselineKind::Bypass => bypass_next_hop(topo, node, fcs, neighbors, packet, now),
    }
}
