//! Time-ordered event queue with a monotone sequence number as tiebreaker.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{Millis, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    PacketInject { packet: usize },
    PacketArrival { node: NodeId, packet: usize },
    TxComplete { node: NodeId },
    AckTimeout { node: NodeId },
    Probe { node: NodeId },
    ProbeTimeout { node: NodeId, round: usize },
    FeedbackDelivery { delivery: usize },
    FaultOnset { node: NodeId },
    DeadlineCheck { packet: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::PacketInject { .. } => "PACKET_INJECT",
            EventKind::PacketArrival { .. } => "PACKET_ARRIVAL",
            EventKind::TxComplete { .. } => "TX_COMPLETE",
            EventKind::AckTimeout { .. } => "ACK_TIMEOUT",
            EventKind::Probe { .. } => "PROBE",
            EventKind::ProbeTimeout { .. } => "PROBE_TIMEOUT",
            EventKind::FeedbackDelivery { .. } => "FEEDBACK_DELIVERY",
            EventKind::FaultOnset { .. } => "FAULT_ONSET",
            EventKind::DeadlineCheck { .. } => "DEADLINE_CHECK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: Millis,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    /// Reversed so the max-heap pops the earliest `(time, seq)` first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: Millis,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    /// Schedules `kind` at `time`, which must not precede the current time.
    pub fn schedule(&mut self, time: Millis, kind: EventKind) -> u64 {
        assert!(time >= self.now, "event at {time} scheduled from {}", self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
        seq
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
