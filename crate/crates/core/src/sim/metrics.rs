//! Per-run outcome counters and per-packet records.

use serde::{Deserialize, Serialize};

use crate::model::{Millis, NodeId, TransmitMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Fate {
    Delivered,
    Expired,
    DroppedNoRoute,
    BufferDrop,
}

impl Fate {
    pub fn as_str(self) -> &'static str {
        match self {
            Fate::Delivered => "DELIVERED",
            Fate::Expired => "EXPIRED",
            Fate::DroppedNoRoute => "DROPPED_NO_ROUTE",
            Fate::BufferDrop => "BUFFER_DROP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketOutcome {
    pub id: u64,
    pub fate: Fate,
    pub created_at: Millis,
    pub deadline: Millis,
    pub finished_at: Millis,
    pub hop_trace: Vec<NodeId>,
    /// Mode of each successful hop, aligned with `hop_trace[1..]`.
    pub modes: Vec<TransmitMode>,
}

impl PacketOutcome {
    pub fn delay(&self) -> Millis {
        self.finished_at - self.created_at
    }

    /// Delivered by one jump straight from the source to the sink.
    pub fn is_direct_jump(&self) -> bool {
        self.fate == Fate::Delivered && self.hop_trace.len() == 2 && self.modes == [TransmitMode::Jump]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub injected: u64,
    pub delivered: u64,
    pub expired: u64,
    pub dropped_no_route: u64,
    pub buffer_drops: u64,
    pub control_packets: u64,
    pub mean_delay: Millis,
    pub p95_delay: Millis,
    /// Joules spent on data transmissions, including failed attempts.
    pub energy_total: f64,
    pub jump_transmissions: u64,
    /// Data transmissions started by each node id.
    pub node_tx: Vec<u64>,
}

impl MetricsRecord {
    pub fn is_conserved(&self) -> bool {
        self.injected == self.delivered + self.expired + self.dropped_no_route + self.buffer_drops
    }

    pub fn success_ratio(&self) -> f64 {
        if self.injected == 0 {
            0.0
        } else {
            self.delivered as f64 / self.injected as f64
        }
    }

    /// Fills the delay statistics from the delivered packets' delays.
    pub fn set_delays(&mut self, mut delays: Vec<Millis>) {
        if delays.is_empty() {
            self.mean_delay = 0.0;
            self.p95_delay = 0.0;
            return;
        }
        delays.sort_by(f64::total_cmp);
        self.mean_delay = delays.iter().sum::<f64>() / delays.len() as f64;
        self.p95_delay = percentile(&delays, 0.95);
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
