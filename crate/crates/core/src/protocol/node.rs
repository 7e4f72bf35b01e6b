//! Per-node protocol state: routing table, detection of faulty, congested and
//! void neighbourhoods, rate-band next-hop selection, jumping and feedback.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::jump::{apply_jump_result, choose_jump_target_where, jump_probabilities, scale_success};
use super::thresholds::{compute_lambda, compute_thresholds, Band, DEFAULT_THETA_JUMP};
use crate::model::{
    legal_transition, CandidateEntry, Confidence, FeedbackKind, FeedbackMessage, Millis, NodeId, NodeState, Packet,
    RateClass,
};
use crate::topology::{build_fcs, Fcs, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongestionParams {
    /// Predicted occupancy at which a node declares itself congested.
    pub theta_cong: f64,
    /// Forecast horizon for the arrival-rate term.
    pub horizon: Millis,
    /// A congested node recovers once the forecast drops below
    /// `theta_cong - hysteresis`.
    pub hysteresis: f64,
}

impl Default for CongestionParams {
    fn default() -> Self {
        Self { theta_cong: 0.8, horizon: 5.0, hysteresis: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmrfParams {
    pub theta_jump: f64,
    pub confidence_step: u8,
    pub confidence_threshold: u8,
    pub congestion: CongestionParams,
    /// Mean per-hop delay μ.
    pub mean_hop_delay: Millis,
}

impl DmrfParams {
    pub fn with_mean_hop_delay(mean_hop_delay: Millis) -> Self {
        Self {
            theta_jump: DEFAULT_THETA_JUMP,
            confidence_step: 25,
            confidence_threshold: 50,
            congestion: CongestionParams::default(),
            mean_hop_delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DropReason {
    Expired,
    NoRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward { next: NodeId, rate: RateClass },
    Jump { next: NodeId },
    Drop { reason: DropReason },
}

impl ForwardDecision {
    pub fn next(&self) -> Option<NodeId> {
        match *self {
            ForwardDecision::Forward { next, .. } | ForwardDecision::Jump { next } => Some(next),
            ForwardDecision::Drop { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingTable {
    pub owner: NodeId,
    pub fcs: Fcs,
    /// Built on first use; empty until then.
    pub jump_candidates: Vec<CandidateEntry>,
    pub upstream: Option<NodeId>,
    pub theta_jump: f64,
    pub last_feedback_seen: BTreeMap<NodeId, Millis>,
    jump_built: bool,
}

impl RoutingTable {
    pub fn fcs_entry(&self, id: NodeId) -> Option<&CandidateEntry> {
        self.fcs.members.iter().find(|e| e.candidate == id)
    }

    pub fn jump_entry(&self, id: NodeId) -> Option<&CandidateEntry> {
        self.jump_candidates.iter().find(|e| e.candidate == id)
    }

    pub fn jump_table_built(&self) -> bool {
        self.jump_built
    }

    pub fn fcs_states(&self) -> Vec<NodeState> {
        self.fcs.members.iter().map(|e| e.cached_state).collect()
    }

    fn set_cached_state(&mut self, id: NodeId, state: NodeState) -> bool {
        let mut found = false;
        for e in self.fcs.members.iter_mut().chain(self.jump_candidates.iter_mut()) {
            if e.candidate == id {
                e.cached_state = state;
                found = true;
            }
        }
        found
    }
}

/// Candidate reply gathered by one probe round; `None` means no reply before
/// the timeout, otherwise the advertised one-hop delay estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeReply {
    pub candidate: NodeId,
    pub delay_est: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionOutcome {
    /// Candidates whose cached state changed.
    pub updates: Vec<(NodeId, NodeState)>,
    /// State report for upstream nodes if the node's own state changed.
    pub feedback: Option<FeedbackMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionOutcome {
    pub predicted: f64,
    pub feedback: Option<FeedbackMessage>,
}

/// Read-only context needed when a decision may fall back to jumping.
#[derive(Debug, Clone, Copy)]
pub struct DecisionEnv<'a> {
    pub topo: &'a Topology,
    /// Estimated transmission time to the sink for every node id.
    pub estimates: &'a [Millis],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmrfNode {
    pub id: NodeId,
    pub state: NodeState,
    pub table: RoutingTable,
    /// Estimated transmission time from this node to the sink (T_i).
    pub estimate: Millis,
    pub params: DmrfParams,
    congested: bool,
    preferred: Vec<NodeId>,
}

fn report_kind(state: NodeState) -> FeedbackKind {
    match state {
        NodeState::Void => FeedbackKind::Void,
        NodeState::JFaulty | NodeState::Faulty => FeedbackKind::Fault,
        NodeState::JCong | NodeState::Cong => FeedbackKind::Cong,
        NodeState::Normal => FeedbackKind::Recover,
    }
}

impl DmrfNode {
    /// Builds the node's FCS from the topology. Candidate delay estimates
    /// start at μ.
    pub fn new(topo: &Topology, id: NodeId, params: DmrfParams, estimate: Millis) -> Self {
        let mut fcs = build_fcs(topo, id).unwrap_or(Fcs { owner: id, members: Vec::new() });
        let threshold = params.confidence_threshold;
        for e in &mut fcs.members {
            e.delay_est = params.mean_hop_delay;
            e.confidence = Confidence::new(threshold);
        }
        Self {
            id,
            state: NodeState::Normal,
            table: RoutingTable {
                owner: id,
                fcs,
                jump_candidates: Vec::new(),
                upstream: None,
                theta_jump: params.theta_jump,
                last_feedback_seen: BTreeMap::new(),
                jump_built: false,
            },
            estimate,
            params,
            congested: false,
            preferred: Vec::new(),
        }
    }

    /// Candidates tried first when eligible, e.g. first hops of the chosen
    /// initial paths.
    pub fn set_preferred(&mut self, ids: Vec<NodeId>) {
        self.preferred = ids;
    }

    pub fn is_congested(&self) -> bool {
        self.congested
    }

    pub fn note_upstream(&mut self, prev: NodeId) {
        self.table.upstream = Some(prev);
    }

    /// Builds the jump candidate table if it does not exist yet.
    pub fn ensure_jump_table(&mut self, topo: &Topology) {
        if self.table.jump_built {
            return;
        }
        let mu = self.params.mean_hop_delay;
        let threshold = self.params.confidence_threshold;
        let mut entries: Vec<CandidateEntry> = topo
            .jump_candidates(self.id)
            .into_iter()
            .map(|id| {
                let cached_state = self.table.fcs_entry(id).map_or(NodeState::Normal, |e| e.cached_state);
                CandidateEntry {
                    delay_est: mu,
                    cached_state,
                    confidence: Confidence::new(threshold),
                    ..CandidateEntry::new(id)
                }
            })
            .collect();
        jump_probabilities(&mut entries);
        self.table.jump_candidates = entries;
        self.table.jump_built = true;
    }

    fn derived_state(&self) -> NodeState {
        let members = &self.table.fcs.members;
        if members.iter().all(|e| e.cached_state == NodeState::Void) {
            NodeState::Void
        } else if members.iter().all(|e| e.cached_state.is_fault_like()) {
            NodeState::JFaulty
        } else if members.iter().all(|e| e.cached_state.is_cong_like()) {
            NodeState::JCong
        } else if self.congested {
            NodeState::Cong
        } else {
            NodeState::Normal
        }
    }

    /// Re-derives the node's own state and returns a report for upstream
    /// nodes when the reported kind changed.
    pub fn refresh_state(&mut self) -> Option<FeedbackMessage> {
        let next = self.derived_state();
        if next == self.state {
            return None;
        }
        debug_assert!(legal_transition(self.state, next, &self.table.fcs_states()));
        let before = report_kind(self.state);
        self.state = next;
        let after = report_kind(next);
        (before != after).then(|| FeedbackMessage::state_report(after, self.id))
    }

    /// Applies one probe round to the FCS confidence counters.
    pub fn detect_faulty(&mut self, replies: &[ProbeReply]) -> DetectionOutcome {
        let step = self.params.confidence_step;
        let mut updates = Vec::new();
        for r in replies {
            let Some(e) = self.table.fcs.members.iter_mut().find(|e| e.candidate == r.candidate) else {
                continue;
            };
            match r.delay_est {
                Some(d) => {
                    e.confidence.reset();
                    e.delay_est = d;
                    if e.cached_state == NodeState::Faulty {
                        e.cached_state = NodeState::Normal;
                        updates.push((r.candidate, NodeState::Normal));
                    }
                }
                None => {
                    if e.confidence.miss(step) {
                        e.cached_state = NodeState::Faulty;
                        updates.push((r.candidate, NodeState::Faulty));
                    }
                }
            }
        }
        for &(id, s) in &updates {
            self.table.set_cached_state(id, s);
        }
        DetectionOutcome { updates, feedback: self.refresh_state() }
    }

    /// Occupancy forecast `o + rate * horizon * packet / capacity` with
    /// hysteresis on recovery.
    pub fn detect_congestion(
        &mut self,
        used_bytes: f64,
        capacity_bytes: f64,
        packet_bytes: f64,
        arrival_rate: f64,
    ) -> CongestionOutcome {
        let p = self.params.congestion;
        let occupancy = used_bytes / capacity_bytes;
        let predicted = occupancy + arrival_rate.max(0.0) * p.horizon * packet_bytes / capacity_bytes;
        if !self.congested && predicted >= p.theta_cong {
            self.congested = true;
        } else if self.congested && predicted < p.theta_cong - p.hysteresis {
            self.congested = false;
        }
        CongestionOutcome { predicted, feedback: self.refresh_state() }
    }

    /// Void check against the current FCS.
    pub fn detect_void(&mut self) -> Option<FeedbackMessage> {
        self.refresh_state()
    }

    /// Handles an upstream-bound message received from downstream neighbour
    /// `from`. Returns messages this node must send in turn.
    pub fn on_feedback<R: Rng + ?Sized>(
        &mut self,
        from: NodeId,
        msg: &FeedbackMessage,
        now: Millis,
        rng: &mut R,
    ) -> Vec<FeedbackMessage> {
        self.table.last_feedback_seen.insert(msg.subject, now);
        let mut out = Vec::new();
        let new_state = match msg.kind {
            FeedbackKind::Fault => Some(NodeState::JFaulty),
            FeedbackKind::Cong => Some(NodeState::Cong),
            FeedbackKind::Void => Some(NodeState::Void),
            FeedbackKind::Recover => Some(NodeState::Normal),
            FeedbackKind::JumpFail => None,
        };
        match new_state {
            Some(state) => {
                if state == NodeState::Normal {
                    for e in self.table.fcs.members.iter_mut().filter(|e| e.candidate == msg.subject) {
                        e.confidence.reset();
                    }
                }
                self.table.set_cached_state(msg.subject, state);
                out.extend(self.refresh_state());
            }
            None => {
                let tau: f64 = rng.random();
                scale_success(&mut self.table.fcs.members, from, tau);
                scale_success(&mut self.table.jump_candidates, from, tau);
                if msg.hop_limit > 0 {
                    out.push(FeedbackMessage { hop_limit: msg.hop_limit - 1, ..msg.clone() });
                }
            }
        }
        out
    }

    /// Link-level outcome of a hop-by-hop forward. A missing acknowledgement
    /// counts as a missed reply against the candidate's confidence.
    pub fn on_forward_result(&mut self, target: NodeId, success: bool) -> Option<FeedbackMessage> {
        let step = self.params.confidence_step;
        let e = self.table.fcs.members.iter_mut().find(|e| e.candidate == target)?;
        if success {
            e.confidence.reset();
            return None;
        }
        if e.confidence.miss(step) {
            e.cached_state = NodeState::Faulty;
            self.table.set_cached_state(target, NodeState::Faulty);
            return self.refresh_state();
        }
        None
    }

    /// Updates jump statistics; a failure yields a JUMP_FAIL message for the
    /// upstream node.
    pub fn on_jump_result(
        &mut self,
        target: NodeId,
        success: bool,
        packet: Option<u64>,
        hop_limit: u32,
    ) -> Option<FeedbackMessage> {
        apply_jump_result(&mut self.table.jump_candidates, target, success);
        (!success).then_some(FeedbackMessage {
            kind: FeedbackKind::JumpFail,
            origin: self.id,
            subject: target,
            hop_limit,
            packet,
        })
    }

    fn is_eligible(e: &CandidateEntry, remaining: Millis) -> bool {
        e.cached_state == NodeState::Normal && !e.confidence.is_faulty() && e.delay_est <= remaining
    }

    /// Chooses the next hop for `packet` and updates its rate class.
    pub fn select_next_hop<R: Rng + ?Sized>(
        &mut self,
        packet: &mut Packet,
        now: Millis,
        env: &DecisionEnv<'_>,
        rng: &mut R,
    ) -> ForwardDecision {
        let remaining = packet.remaining_time(now);
        if remaining <= 0.0 {
            return ForwardDecision::Drop { reason: crate::protocol::DropReason::Expired };
        }
        let mu = self.params.mean_hop_delay;
        let estimate = if self.estimate > 0.0 { self.estimate } else { mu };
        let lambda = compute_lambda(remaining, estimate).unwrap_or(0.0);
        let max_delay = self.table.fcs.members.iter().map(|e| e.delay_est).fold(0.0, f64::max);
        let band = match compute_thresholds(self.params.theta_jump, estimate, max_delay, max_delay, mu, remaining) {
            Ok(t) => t.band(lambda),
            Err(_) => Band::Jump,
        };
        let wanted = band.rate_class().unwrap_or(RateClass::High);
        packet.rate_class = packet.rate_class.step_towards(wanted);

        if self.state.forces_jump() || band == Band::Jump {
            return self.jump(remaining, env, rng);
        }

        let pick = |members: &[CandidateEntry], only: Option<&[NodeId]>| -> Option<usize> {
            members
                .iter()
                .enumerate()
                .filter(|(_, e)| Self::is_eligible(e, remaining))
                .filter(|(_, e)| only.is_none_or(|ids| ids.contains(&e.candidate)))
                .min_by(|(_, a), (_, b)| {
                    a.tx_count
                        .cmp(&b.tx_count)
                        .then(b.delay_est.total_cmp(&a.delay_est))
                        .then(a.candidate.cmp(&b.candidate))
                })
                .map(|(i, _)| i)
        };
        let members = &self.table.fcs.members;
        let chosen = if self.preferred.is_empty() {
            pick(members, None)
        } else {
            pick(members, Some(&self.preferred)).or_else(|| pick(members, None))
        };
        match chosen {
            Some(i) => {
                let e = &mut self.table.fcs.members[i];
                e.tx_count += 1;
                ForwardDecision::Forward { next: e.candidate, rate: packet.rate_class }
            }
            None => self.jump(remaining, env, rng),
        }
    }

    /// Jump target among candidates that can still meet the deadline
    /// (`μ + T_t ≤ L`), with the sink as last resort when in range.
    fn jump<R: Rng + ?Sized>(&mut self, remaining: Millis, env: &DecisionEnv<'_>, rng: &mut R) -> ForwardDecision {
        self.ensure_jump_table(env.topo);
        let mu = self.params.mean_hop_delay;
        let sink = env.topo.sink();
        let sink_fallback = (env.topo.distance(self.id, sink) <= env.topo.max_tx_distance()).then_some(sink);
        let estimates = env.estimates;
        let target = choose_jump_target_where(&self.table.jump_candidates, rng, sink_fallback, |e| {
            estimates.get(e.candidate.index()).is_some_and(|t| mu + t <= remaining)
        });
        match target {
            Some(next) => {
                if let Some(e) = self.table.jump_candidates.iter_mut().find(|e| e.candidate == next) {
                    e.tx_count += 1;
                }
                ForwardDecision::Jump { next }
            }
            None => ForwardDecision::Drop { reason: DropReason::NoRoute },
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::make_packet;
    use crate::topology::{hop_counts_to_sink, Point};

    const MU: f64 = 1.28;

    fn grid(side: usize, r: f64) -> Topology {
        let pts = (0..side * side)
            .map(|k| Point::new((k % side) as f64, (k / side) as f64))
            .collect();
        let e = (side - 1) as f64;
        Topology::from_positions(pts, (e, e), r, 30.0, NodeId(0), NodeId((side * side - 1) as u32)).unwrap()
    }

    fn estimates(t: &Topology) -> Vec<Millis> {
        hop_counts_to_sink(t)
            .into_iter()
            .map(|h| h.map_or(f64::INFINITY, |h| f64::from(h) * MU))
            .collect()
    }

    fn node(t: &Topology, id: u32) -> DmrfNode {
        let est = estimates(t);
        DmrfNode::new(t, NodeId(id), DmrfParams::with_mean_hop_delay(MU), est[id as usize])
    }

    #[test]
    fn confidence_schedule_marks_faulty() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        let miss = [ProbeReply { candidate: NodeId(13), delay_est: None }];
        let out = n.detect_faulty(&miss);
        assert!(out.updates.is_empty());
        assert_eq!(n.table.fcs_entry(NodeId(13)).unwrap().confidence.value(), 75);
        assert_eq!(n.table.fcs_entry(NodeId(13)).unwrap().cached_state, NodeState::Normal);

        n.table.fcs.members[0].confidence = Confidence::with_value(55, 50);
        let out = n.detect_faulty(&miss);
        assert_eq!(out.updates, vec![(NodeId(13), NodeState::Faulty)]);
        assert_eq!(n.table.fcs_entry(NodeId(13)).unwrap().confidence.value(), 30);
    }

    #[test]
    fn reply_resets_confidence_and_delay() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        n.detect_faulty(&[ProbeReply { candidate: NodeId(13), delay_est: None }]);
        n.detect_faulty(&[ProbeReply { candidate: NodeId(13), delay_est: Some(3.0) }]);
        let e = n.table.fcs_entry(NodeId(13)).unwrap();
        assert_eq!(e.confidence.value(), 100);
        assert_eq!(e.delay_est, 3.0);
    }

    #[test]
    fn all_faulty_candidates_give_jfaulty() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        for e in &mut n.table.fcs.members {
            e.confidence = Confidence::with_value(50, 50);
        }
        let replies: Vec<_> =
            n.table.fcs.ids().into_iter().map(|c| ProbeReply { candidate: c, delay_est: None }).collect();
        let out = n.detect_faulty(&replies);
        assert_eq!(n.state, NodeState::JFaulty);
        assert_eq!(out.feedback.unwrap().kind, FeedbackKind::Fault);
    }

    #[test]
    fn congestion_detection() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        let out = n.detect_congestion(85.0, 100.0, 32.0, 0.0);
        assert!((out.predicted - 0.85).abs() < 1e-12);
        assert_eq!(n.state, NodeState::Cong);
        assert_eq!(out.feedback.unwrap().kind, FeedbackKind::Cong);
        let out = n.detect_congestion(75.0, 100.0, 32.0, 0.0);
        assert_eq!(n.state, NodeState::Cong);
        assert!(out.feedback.is_none());
        let out = n.detect_congestion(0.0, 100.0, 32.0, 0.0);
        assert_eq!(n.state, NodeState::Normal);
        assert_eq!(out.feedback.unwrap().kind, FeedbackKind::Recover);

        let mut idle = node(&t, 12);
        assert!(idle.detect_congestion(0.0, 100.0, 32.0, 0.0).feedback.is_none());
        assert_eq!(idle.state, NodeState::Normal);
    }

    #[test]
    fn all_congested_candidates_give_jcong() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in n.table.fcs.ids() {
            n.on_feedback(c, &FeedbackMessage::state_report(FeedbackKind::Cong, c), 0.0, &mut rng);
        }
        assert_eq!(n.state, NodeState::JCong);
    }

    #[test]
    fn void_detection() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(5.0, 5.0), Point::new(10.0, 10.0)];
        let t = Topology::from_positions(pts, (10.0, 10.0), 1.5, 30.0, NodeId(0), NodeId(2)).unwrap();
        let mut n = DmrfNode::new(&t, NodeId(0), DmrfParams::with_mean_hop_delay(MU), f64::INFINITY);
        assert_eq!(n.detect_void().unwrap().kind, FeedbackKind::Void);
        assert_eq!(n.state, NodeState::Void);

        let g = grid(5, 1.5);
        let mut m = node(&g, 12);
        assert!(m.detect_void().is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in m.table.fcs.ids() {
            m.on_feedback(c, &FeedbackMessage::state_report(FeedbackKind::Void, c), 0.0, &mut rng);
        }
        assert_eq!(m.state, NodeState::Void);
    }

    #[test]
    fn feedback_updates_cached_state() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        n.on_feedback(NodeId(13), &FeedbackMessage::state_report(FeedbackKind::Cong, NodeId(13)), 1.0, &mut rng);
        assert_eq!(n.table.fcs_entry(NodeId(13)).unwrap().cached_state, NodeState::Cong);
        n.on_feedback(NodeId(13), &FeedbackMessage::state_report(FeedbackKind::Recover, NodeId(13)), 2.0, &mut rng);
        assert_eq!(n.table.fcs_entry(NodeId(13)).unwrap().cached_state, NodeState::Normal);
        assert_eq!(n.table.last_feedback_seen.get(&NodeId(13)), Some(&2.0));
    }

    #[test]
    fn jump_fail_scales_and_forwards() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 12);
        n.ensure_jump_table(&t);
        let msg = FeedbackMessage {
            kind: FeedbackKind::JumpFail,
            origin: NodeId(13),
            subject: NodeId(19),
            hop_limit: 2,
            packet: Some(4),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tau: f64 = ChaCha8Rng::seed_from_u64(9).random();
        let out = n.on_feedback(NodeId(13), &msg, 0.0, &mut rng);
        assert!((n.table.fcs_entry(NodeId(13)).unwrap().suc - tau).abs() < 1e-12);
        assert!((n.table.jump_entry(NodeId(13)).unwrap().suc - tau).abs() < 1e-12);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].hop_limit, 1);

        let absorbed = FeedbackMessage { hop_limit: 0, ..msg };
        assert!(n.on_feedback(NodeId(13), &absorbed, 0.0, &mut rng).is_empty());
    }

    #[test]
    fn forward_prefers_fewest_transmissions() {
        let t = grid(5, 1.5);
        let est = estimates(&t);
        let mut n = node(&t, 12);
        n.table.fcs.members[0].tx_count = 5;
        n.table.fcs.members[1].tx_count = 3;
        n.table.fcs.members[2].tx_count = 5;
        let mut p = make_packet(0, NodeId(0), 256, 0.0, 100.0).unwrap();
        let env = DecisionEnv { topo: &t, estimates: &est };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = n.select_next_hop(&mut p, 0.0, &env, &mut rng);
        assert_eq!(d, ForwardDecision::Forward { next: n.table.fcs.members[1].candidate, rate: RateClass::Low });
    }

    #[test]
    fn ties_prefer_slower_candidate_then_lower_id() {
        let t = grid(5, 1.5);
        let est = estimates(&t);
        let env = DecisionEnv { topo: &t, estimates: &est };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = node(&t, 12);
        n.table.fcs.members[2].delay_est = 2.0;
        let mut p = make_packet(0, NodeId(0), 256, 0.0, 100.0).unwrap();
        assert_eq!(n.select_next_hop(&mut p, 0.0, &env, &mut rng).next(), Some(NodeId(18)));
        let mut m = node(&t, 12);
        assert_eq!(m.select_next_hop(&mut p, 0.0, &env, &mut rng).next(), Some(NodeId(13)));
    }

    #[test]
    fn small_slack_jumps_and_expired_drops() {
        let t = grid(5, 1.5);
        let est = estimates(&t);
        let env = DecisionEnv { topo: &t, estimates: &est };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = node(&t, 0);
        // T_0 = 4 hops; λ = 0.15 < 0.2
        let mut p = make_packet(0, NodeId(0), 256, 0.0, 0.15 * 4.0 * MU).unwrap();
        assert!(matches!(n.select_next_hop(&mut p, 0.0, &env, &mut rng), ForwardDecision::Jump { .. }));
        let mut q = make_packet(1, NodeId(0), 256, 0.0, 1.0).unwrap();
        assert_eq!(
            n.select_next_hop(&mut q, 2.0, &env, &mut rng),
            ForwardDecision::Drop { reason: DropReason::Expired }
        );
    }

    #[test]
    fn forced_jump_respects_deadline_feasibility() {
        let t = grid(5, 1.5);
        let est = estimates(&t);
        let env = DecisionEnv { topo: &t, estimates: &est };
        let mut n = node(&t, 0);
        n.state = NodeState::Void;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Only the sink satisfies μ + T_t ≤ L when L < 2μ.
        for _ in 0..50 {
            let mut p = make_packet(0, NodeId(0), 256, 0.0, 1.9 * MU).unwrap();
            assert_eq!(n.select_next_hop(&mut p, 0.0, &env, &mut rng), ForwardDecision::Jump { next: NodeId(24) });
        }
        assert!(n.table.jump_table_built());
        let fcs_ids = n.table.fcs.ids();
        assert!(fcs_ids.iter().all(|id| n.table.jump_entry(*id).is_some()));
    }

    #[test]
    fn rate_class_is_pinned_through_medium() {
        let t = grid(5, 1.5);
        let est = estimates(&t);
        let env = DecisionEnv { topo: &t, estimates: &est };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut n = node(&t, 0);
        // λ ≈ 0.25 sits in the HIGH band; a LOW packet may only step to MEDIUM.
        let mut p = make_packet(0, NodeId(0), 256, 0.0, 0.25 * 4.0 * MU).unwrap();
        let d = n.select_next_hop(&mut p, 0.0, &env, &mut rng);
        assert_eq!(p.rate_class, RateClass::Medium);
        assert!(matches!(d, ForwardDecision::Forward { rate: RateClass::Medium, .. }));
    }

    #[test]
    fn jump_failure_emits_feedback() {
        let t = grid(5, 1.5);
        let mut n = node(&t, 0);
        n.ensure_jump_table(&t);
        let fb = n.on_jump_result(NodeId(24), false, Some(3), 1).unwrap();
        assert_eq!(fb.kind, FeedbackKind::JumpFail);
        assert_eq!((fb.origin, fb.subject), (NodeId(0), NodeId(24)));
        assert!(n.on_jump_result(NodeId(24), true, None, 1).is_none());
        let e = n.table.jump_entry(NodeId(24)).unwrap();
        assert_eq!((e.attempts, e.successes), (2, 1));
    }
}
