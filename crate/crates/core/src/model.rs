//! Shared domain vocabulary: node identities and states, packets, per-candidate
//! routing statistics and upstream feedback messages.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time and durations, in milliseconds.
pub type Millis = f64;

/// Dense node index, stable for the lifetime of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeState {
    Normal,
    Faulty,
    JFaulty,
    Cong,
    JCong,
    Void,
}

impl NodeState {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeState::Normal => "NORMAL",
            NodeState::Faulty => "FAULTY",
            NodeState::JFaulty => "JFAULTY",
            NodeState::Cong => "CONG",
            NodeState::JCong => "JCONG",
            NodeState::Void => "VOID",
        }
    }

    /// States in which the node must use jumping transmission.
    pub fn forces_jump(self) -> bool {
        matches!(self, NodeState::JFaulty | NodeState::JCong | NodeState::Void)
    }

    pub fn is_fault_like(self) -> bool {
        matches!(self, NodeState::Faulty | NodeState::JFaulty)
    }

    pub fn is_cong_like(self) -> bool {
        matches!(self, NodeState::Cong | NodeState::JCong)
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Transmission-rate label a packet carries between hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateClass {
    Low,
    Medium,
    High,
}

impl RateClass {
    /// Restricts a band change so a packet never moves LOW <-> HIGH in one hop.
    pub fn step_towards(self, wanted: RateClass) -> RateClass {
        match (self, wanted) {
            (RateClass::Low, RateClass::High) | (RateClass::High, RateClass::Low) => RateClass::Medium,
            (_, w) => w,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RateClass::Low => "LOW",
            RateClass::Medium => "MEDIUM",
            RateClass::High => "HIGH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransmitMode {
    HopByHop,
    Jump,
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("packet lifetime must be positive, got {0} ms")]
    NonPositiveLifetime(Millis),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub source: NodeId,
    pub size_bits: u32,
    pub created_at: Millis,
    /// Absolute deadline.
    pub deadline: Millis,
    pub rate_class: RateClass,
    pub hop_trace: Vec<NodeId>,
    pub mode: TransmitMode,
}

impl Packet {
    /// Remaining transmission time `deadline - now`; negative once expired.
    #[inline]
    pub fn remaining_time(&self, now: Millis) -> Millis {
        self.deadline - now
    }

    pub fn current_node(&self) -> NodeId {
        *self.hop_trace.last().expect("hop trace always holds the source")
    }

    /// The node that handed the packet to the current holder, if any.
    pub fn previous_hop(&self) -> Option<NodeId> {
        let n = self.hop_trace.len();
        (n >= 2).then(|| self.hop_trace[n - 2])
    }

    /// Appends a hop; consecutive duplicates are collapsed.
    pub fn record_hop(&mut self, node: NodeId) {
        if self.hop_trace.last() != Some(&node) {
            self.hop_trace.push(node);
        }
    }

    pub fn has_visited(&self, node: NodeId) -> bool {
        self.hop_trace.contains(&node)
    }
}

pub fn make_packet(
    id: u64,
    source: NodeId,
    size_bits: u32,
    now: Millis,
    lifetime: Millis,
) -> Result<Packet, ModelError> {
    if lifetime.is_nan() || lifetime <= 0.0 {
        return Err(ModelError::NonPositiveLifetime(lifetime));
    }
    Ok(Packet {
        id,
        source,
        size_bits,
        created_at: now,
        deadline: now + lifetime,
        rate_class: RateClass::Low,
        hop_trace: vec![source],
        mode: TransmitMode::HopByHop,
    })
}

pub fn remaining_time(packet: &Packet, now: Millis) -> Millis {
    packet.remaining_time(now)
}

/// Whether a node may move from `from` to `to` given the cached states of its
/// forwarding candidate set.
///
/// The propagated states need unanimous support from the candidate set:
/// JFAULTY needs every member FAULTY/JFAULTY, JCONG every member CONG/JCONG,
/// VOID an empty set or every member VOID. NORMAL, CONG and FAULTY have no
/// precondition.
pub fn legal_transition(from: NodeState, to: NodeState, fcs_states: &[NodeState]) -> bool {
    if from == to {
        return true;
    }
    match to {
        NodeState::Normal | NodeState::Cong | NodeState::Faulty => true,
        NodeState::JFaulty => !fcs_states.is_empty() && fcs_states.iter().all(|s| s.is_fault_like()),
        NodeState::JCong => !fcs_states.is_empty() && fcs_states.iter().all(|s| s.is_cong_like()),
        NodeState::Void => fcs_states.iter().all(|s| *s == NodeState::Void),
    }
}

/// Per-node confidence in one candidate's liveness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confidence {
    value: u8,
    threshold: u8,
}

impl Confidence {
    pub const FULL: u8 = 100;

    pub fn new(threshold: u8) -> Self {
        Self { value: Self::FULL, threshold }
    }

    pub fn with_value(value: u8, threshold: u8) -> Self {
        Self { value: value.min(Self::FULL), threshold }
    }

    pub fn value(&self) -> u8 {
        self.value
    }

    pub fn threshold(&self) -> u8 {
        self.threshold
    }

    /// Decrements by `step`, saturating at zero. Returns true if this miss
    /// pushed the value below the threshold.
    pub fn miss(&mut self, step: u8) -> bool {
        let was_ok = !self.is_faulty();
        self.value = self.value.saturating_sub(step);
        was_ok && self.is_faulty()
    }

    pub fn reset(&mut self) {
        self.value = Self::FULL;
    }

    pub fn is_faulty(&self) -> bool {
        self.value < self.threshold
    }
}

/// Statistics a node keeps about one forwarding or jump candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub candidate: NodeId,
    /// Transmission attempts (T_t).
    pub attempts: u32,
    /// Successful transmissions (S_t).
    pub successes: u32,
    /// Success ratio Suc_t; normally S/T but lowered by the failure penalty
    /// and by upstream feedback until the next recorded attempt.
    pub suc: f64,
    pub jump_p: f64,
    pub delay_est: Millis,
    pub cached_state: NodeState,
    pub tx_count: u64,
    pub confidence: Confidence,
}

impl CandidateEntry {
    pub fn new(candidate: NodeId) -> Self {
        Self {
            candidate,
            attempts: 0,
            successes: 0,
            suc: 1.0,
            jump_p: 0.0,
            delay_est: 0.0,
            cached_state: NodeState::Normal,
            tx_count: 0,
            confidence: Confidence::new(50),
        }
    }

    /// S/T, with the optimistic prior 1 for untried candidates.
    pub fn counter_ratio(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            f64::from(self.successes) / f64::from(self.attempts)
        }
    }

    pub fn record_success(&mut self) {
        self.attempts += 1;
        self.successes += 1;
        self.suc = self.counter_ratio();
    }

    /// Counts the failed attempt, then applies `Suc' = (S - 1) / T` clamped at 0.
    pub fn record_failure(&mut self) {
        self.attempts += 1;
        self.suc = f64::from(self.successes.saturating_sub(1)) / f64::from(self.attempts);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackKind {
    Fault,
    Cong,
    Recover,
    Void,
    JumpFail,
}

impl FeedbackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackKind::Fault => "FAULT",
            FeedbackKind::Cong => "CONG",
            FeedbackKind::Recover => "RECOVER",
            FeedbackKind::Void => "VOID",
            FeedbackKind::JumpFail => "JUMP_FAIL",
        }
    }
}

/// Upstream control message. Every delivery counts as one control packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackMessage {
    pub kind: FeedbackKind,
    pub origin: NodeId,
    pub subject: NodeId,
    pub hop_limit: u32,
    /// Data packet whose hop trace routes a JUMP_FAIL back towards the source.
    pub packet: Option<u64>,
}

impl FeedbackMessage {
    pub fn state_report(kind: FeedbackKind, origin: NodeId) -> Self {
        Self { kind, origin, subject: origin, hop_limit: 1, packet: None }
    }
}
