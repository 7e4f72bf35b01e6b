//! Single-threaded discrete-event run of one scenario.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::{EventKind, EventQueue};
use super::faults::{inject_faults, preload_buffers};
use super::metrics::{Fate, MetricsRecord, PacketOutcome};
use super::radio::{energy_cost, sample_delay, RadioModel};
use super::trace::TraceRecord;
use crate::baseline::{baseline_next_hop, BaselineKind};
use crate::model::{make_packet, CandidateEntry, FeedbackKind, FeedbackMessage, Millis, NodeId, Packet, RateClass, TransmitMode};
use crate::protocol::{DecisionEnv, DmrfNode, DmrfParams, DropReason, ForwardDecision, ProbeReply};
use crate::topology::{build_fcs, disjoint_paths, hop_counts_to_sink, select_k, PathSet, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[serde(alias = "DMRF")]
    Dmrf,
    #[serde(alias = "GREEDY_MIN_DELAY")]
    GreedyMinDelay,
    #[serde(alias = "GREEDY_MAX_RATE")]
    GreedyMaxRate,
    #[serde(alias = "BYPASS")]
    Bypass,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] =
        [ProtocolKind::Dmrf, ProtocolKind::GreedyMinDelay, ProtocolKind::GreedyMaxRate, ProtocolKind::Bypass];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Dmrf => "dmrf",
            ProtocolKind::GreedyMinDelay => "greedy_min_delay",
            ProtocolKind::GreedyMaxRate => "greedy_max_rate",
            ProtocolKind::Bypass => "bypass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str().eq_ignore_ascii_case(s))
    }

    fn baseline(self) -> Option<BaselineKind> {
        match self {
            ProtocolKind::Dmrf => None,
            ProtocolKind::GreedyMinDelay => Some(BaselineKind::GreedyMinDelay),
            ProtocolKind::GreedyMaxRate => Some(BaselineKind::GreedyMaxRate),
            ProtocolKind::Bypass => Some(BaselineKind::Bypass),
        }
    }
}

/// Service-time multipliers per rate class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateMultipliers {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for RateMultipliers {
    fn default() -> Self {
        Self { low: 1.5, medium: 1.0, high: 0.7 }
    }
}

impl RateMultipliers {
    pub fn of(&self, class: RateClass) -> f64 {
        match class {
            RateClass::Low => self.low,
            RateClass::Medium => self.medium,
            RateClass::High => self.high,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub interval: Millis,
    pub timeout: Millis,
    /// Whether probes count as control packets.
    pub count_in_control: bool,
}

impl Default for ProbeParams {
    fn default() -> Self {
        Self { interval: 10.0, timeout: 2.0, count_in_control: true }
    }
}

/// Everything a run needs besides the topology, protocol and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub radio: RadioModel,
    pub buffer_bytes: u32,
    pub packet_bytes: u32,
    pub packet_count: u32,
    /// Relative deadline given to every packet at injection.
    pub lifetime: Millis,
    pub injection_interval: Millis,
    pub fault_ratio: f64,
    pub buffer_fill: f64,
    pub dmrf: DmrfParams,
    pub rates: RateMultipliers,
    pub probe: ProbeParams,
    /// How long a sender waits for a link acknowledgement.
    pub ack_timeout: Millis,
    pub control_bytes: u32,
    pub horizon: Millis,
    pub paths_m: usize,
    pub paths_k: usize,
    pub record_trace: bool,
}

impl Scenario {
    pub fn reference() -> Self {
        let radio = RadioModel::reference();
        Self {
            radio,
            buffer_bytes: 100,
            packet_bytes: 32,
            packet_count: 100,
            lifetime: 150.0,
            injection_interval: 5.0,
            fault_ratio: 0.0,
            buffer_fill: 0.0,
            dmrf: DmrfParams::with_mean_hop_delay(radio.mean_delay),
            rates: RateMultipliers::default(),
            probe: ProbeParams::default(),
            ack_timeout: 2.0,
            control_bytes: 8,
            horizon: 10_000.0,
            paths_m: 4,
            paths_k: 2,
            record_trace: false,
        }
    }

    pub fn packet_bits(&self) -> u32 {
        self.packet_bytes * 8
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn check(ok: bool, field: &'static str, reason: impl Into<String>) -> Result<(), ScenarioError> {
            if ok {
                Ok(())
            } else {
                Err(ScenarioError::Invalid { field, reason: reason.into() })
            }
        }
        let r = &self.radio;
        check(r.bandwidth > 0.0 && r.bandwidth.is_finite(), "bandwidth", "must be positive")?;
        check(r.mean_delay > 0.0 && r.mean_delay.is_finite(), "mean_delay", "must be positive")?;
        check(r.sigma >= 0.0 && r.sigma.is_finite(), "sigma", "must be non-negative")?;
        check(r.max_tx_distance > 0.0, "max_tx_distance", "must be positive")?;
        check(r.eps_elec >= 0.0 && r.eps_amp >= 0.0, "energy", "coefficients must be non-negative")?;
        check(self.buffer_bytes > 0, "buffer_bytes", "must be positive")?;
        check(self.packet_bytes > 0, "packet_bytes", "must be positive")?;
        check(self.packet_bytes <= self.buffer_bytes, "packet_bytes", "must fit in the buffer")?;
        check(self.lifetime > 0.0 && self.lifetime.is_finite(), "packet_lifetime", "must be positive")?;
        check(self.injection_interval >= 0.0 && self.injection_interval.is_finite(), "injection_interval", "must be non-negative")?;
        check((0.0..=1.0).contains(&self.fault_ratio), "fault_ratio", "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.buffer_fill), "buffer_fill", "must lie in [0, 1]")?;
        check(self.dmrf.theta_jump > 0.0 && self.dmrf.theta_jump < 1.0, "theta_jump", "must lie in (0, 1)")?;
        check(self.dmrf.congestion.theta_cong > 0.0, "theta_cong", "must be positive")?;
        check(self.dmrf.congestion.horizon >= 0.0, "congestion_horizon", "must be non-negative")?;
        check(self.dmrf.congestion.hysteresis >= 0.0, "hysteresis", "must be non-negative")?;
        check(self.dmrf.mean_hop_delay > 0.0, "mean_hop_delay", "must be positive")?;
        check(self.dmrf.confidence_step > 0, "confidence_step", "must be positive")?;
        let m = &self.rates;
        check(m.low > 0.0 && m.medium > 0.0 && m.high > 0.0, "rate_multipliers", "must be positive")?;
        check(self.probe.interval > 0.0, "probe_interval", "must be positive")?;
        check(self.probe.timeout >= 0.0, "probe_timeout", "must be non-negative")?;
        check(self.ack_timeout > 0.0, "ack_timeout", "must be positive")?;
        check(self.horizon > 0.0, "horizon", "must be positive")?;
        check(self.paths_m >= 1, "paths_m", "must be at least 1")?;
        check(self.paths_k >= 1, "paths_k", "must be at least 1")?;
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub packets: Vec<PacketOutcome>,
    pub trace: Vec<TraceRecord>,
    /// Initial node-disjoint paths, with the chosen subset marked.
    pub paths: PathSet,
}

/// Runs one scenario to completion or to the horizon.
pub fn run(topo: &Topology, protocol: ProtocolKind, scenario: &Scenario, seed: u64) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    if scenario.radio.max_tx_distance < topo.comm_radius() {
        return Err(ScenarioError::Invalid {
            field: "max_tx_distance",
            reason: "must not be below the communication radius".into(),
        });
    }
    let mut sim = Sim::new(topo, protocol, scenario, seed);
    if scenario.packet_count == 0 {
        return Ok(sim.finish());
    }
    sim.start();
    sim.run_loop();
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Location {
    Queued(NodeId),
    Sending(NodeId),
    Arriving(NodeId),
    Gone,
}

struct PacketSlot {
    packet: Packet,
    fate: Option<Fate>,
    finished_at: Millis,
    modes: Vec<TransmitMode>,
    location: Location,
}

#[derive(Debug, Clone, Copy)]
struct Tx {
    packet: usize,
    target: NodeId,
    jump: bool,
    rate: RateClass,
}

#[derive(Debug, Default)]
struct NodeRt {
    alive: bool,
    background: u32,
    queue: VecDeque<usize>,
    /// Bytes of data packets held, including the one being sent.
    held_bytes: u32,
    current: Option<Tx>,
    window_arrivals: u32,
    arrival_rate: f64,
    probed_once: bool,
}

struct Envelope {
    msg: FeedbackMessage,
    from: NodeId,
    to: NodeId,
    /// Nodes still upstream of `to` for messages routed along a hop trace.
    route: Vec<NodeId>,
}

const RATE_EWMA: f64 = 0.5;

struct Sim<'a> {
    topo: &'a Topology,
    protocol: ProtocolKind,
    sc: &'a Scenario,
    rng: ChaCha8Rng,
    queue: EventQueue,
    nodes: Vec<NodeRt>,
    dmrf: Vec<Option<DmrfNode>>,
    fcs_view: Vec<Vec<CandidateEntry>>,
    neighbors: Vec<Vec<NodeId>>,
    upstream: Vec<Vec<NodeId>>,
    estimates: Vec<Millis>,
    packets: Vec<PacketSlot>,
    envelopes: Vec<Envelope>,
    probe_rounds: Vec<Vec<ProbeReply>>,
    metrics: MetricsRecord,
    trace: Vec<TraceRecord>,
    paths: PathSet,
    unresolved: usize,
    injected_all: bool,
}

impl<'a> Sim<'a> {
    fn new(topo: &'a Topology, protocol: ProtocolKind, sc: &'a Scenario, seed: u64) -> Self {
        let n = topo.id_capacity();
        let mu = sc.radio.mean_delay;
        let estimates: Vec<Millis> = hop_counts_to_sink(topo)
            .into_iter()
            .map(|h| h.map_or(f64::INFINITY, |h| f64::from(h) * mu))
            .collect();
        let neighbors = topo.neighbor_lists();
        let background = preload_buffers(topo, sc.buffer_fill, sc.buffer_bytes);
        let mut nodes: Vec<NodeRt> = (0..n).map(|_| NodeRt::default()).collect();
        let mut fcs_view = vec![Vec::new(); n];
        let mut upstream = vec![Vec::new(); n];
        for id in topo.node_ids() {
            let rt = &mut nodes[id.index()];
            rt.alive = true;
            rt.background = background[id.index()];
            let mut fcs = build_fcs(topo, id).expect("node present").members;
            for e in &mut fcs {
                e.delay_est = mu;
                upstream[e.candidate.index()].push(id);
            }
            fcs_view[id.index()] = fcs;
        }
        let paths = select_k(&disjoint_paths(topo, sc.paths_m, mu), sc.paths_k);
        let dmrf = if protocol == ProtocolKind::Dmrf {
            let mut params = sc.dmrf.clone();
            params.mean_hop_delay = mu;
            let mut v: Vec<Option<DmrfNode>> = (0..n).map(|_| None).collect();
            for id in topo.node_ids() {
                v[id.index()] = Some(DmrfNode::new(topo, id, params.clone(), estimates[id.index()]));
            }
            let first_hops: Vec<NodeId> = paths.chosen_paths().filter_map(|p| p.get(1).copied()).collect();
            if let Some(src) = v[topo.source().index()].as_mut() {
                src.set_preferred(first_hops);
            }
            v
        } else {
            Vec::new()
        };
        Self {
            topo,
            protocol,
            sc,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: EventQueue::new(),
            nodes,
            dmrf,
            fcs_view,
            neighbors,
            upstream,
            estimates,
            packets: Vec::new(),
            envelopes: Vec::new(),
            probe_rounds: Vec::new(),
            metrics: MetricsRecord { node_tx: vec![0; n], ..Default::default() },
            trace: Vec::new(),
            paths,
            unresolved: 0,
            injected_all: false,
        }
    }

    fn now(&self) -> Millis {
        self.queue.now()
    }

    fn record(&mut self, kind: &str, node: Option<NodeId>, packet: Option<usize>, detail: Option<String>) {
        if self.sc.record_trace {
            self.trace.push(TraceRecord {
                time: self.now(),
                kind: kind.to_string(),
                node: node.map(|n| n.0),
                packet: packet.map(|p| self.packets[p].packet.id),
                detail,
            });
        }
    }

    fn control(&mut self, count: u64) {
        self.metrics.control_packets += count;
    }

    fn start(&mut self) {
        let faults = inject_faults(self.topo, self.sc.fault_ratio, &mut self.rng);
        for (id, at) in faults {
            self.queue.schedule(at, EventKind::FaultOnset { node: id });
        }
        for id in self.topo.node_ids().collect::<Vec<_>>() {
            if id != self.topo.sink() {
                self.queue.schedule(0.0, EventKind::Probe { node: id });
            }
        }
        for k in 0..self.sc.packet_count as usize {
            let at = k as f64 * self.sc.injection_interval;
            self.queue.schedule(at, EventKind::PacketInject { packet: k });
        }
    }

    fn run_loop(&mut self) {
        while let Some(ev) = self.queue.pop() {
            if ev.time > self.sc.horizon {
                break;
            }
            self.handle(ev.kind);
            if self.injected_all && self.unresolved == 0 {
                break;
            }
        }
        let now = self.now();
        for p in 0..self.packets.len() {
            if self.packets[p].fate.is_none() {
                self.packets[p].location = Location::Gone;
                self.resolve(p, Fate::Expired, now);
            }
        }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::PacketInject { packet } => self.on_inject(packet),
            EventKind::PacketArrival { node, packet } => self.on_arrival(node, packet),
            EventKind::TxComplete { node } => self.on_tx_complete(node),
            EventKind::AckTimeout { node } => self.on_ack_timeout(node),
            EventKind::Probe { node } => self.on_probe(node),
            EventKind::ProbeTimeout { node, round } => self.on_probe_timeout(node, round),
            EventKind::FeedbackDelivery { delivery } => self.on_feedback(delivery),
            EventKind::FaultOnset { node } => {
                self.nodes[node.index()].alive = false;
                self.record("FAULT_ONSET", Some(node), None, None);
            }
            EventKind::DeadlineCheck { packet } => self.on_deadline(packet),
        }
    }

    fn on_inject(&mut self, k: usize) {
        let now = self.now();
        let src = self.topo.source();
        let packet = make_packet(k as u64, src, self.sc.packet_bits(), now, self.sc.lifetime)
            .expect("lifetime validated positive");
        let deadline = packet.deadline;
        self.packets.push(PacketSlot {
            packet,
            fate: None,
            finished_at: 0.0,
            modes: Vec::new(),
            location: Location::Queued(src),
        });
        let p = self.packets.len() - 1;
        self.unresolved += 1;
        self.metrics.injected += 1;
        if self.packets.len() == self.sc.packet_count as usize {
            self.injected_all = true;
        }
        self.record("PACKET_INJECT", Some(src), Some(p), None);
        self.queue.schedule(deadline, EventKind::DeadlineCheck { packet: p });
        let rt = &mut self.nodes[src.index()];
        rt.queue.push_back(p);
        rt.held_bytes += self.sc.packet_bytes;
        self.try_start(src);
    }

    fn resolve(&mut self, p: usize, fate: Fate, at: Millis) {
        let slot = &mut self.packets[p];
        debug_assert!(slot.fate.is_none());
        slot.fate = Some(fate);
        slot.finished_at = at;
        self.unresolved -= 1;
        match fate {
            Fate::Delivered => self.metrics.delivered += 1,
            Fate::Expired => self.metrics.expired += 1,
            Fate::DroppedNoRoute => self.metrics.dropped_no_route += 1,
            Fate::BufferDrop => self.metrics.buffer_drops += 1,
        }
        let node = slot.packet.current_node();
        self.record(fate.as_str(), Some(node), Some(p), None);
    }

    fn release(&mut self, node: NodeId) {
        let rt = &mut self.nodes[node.index()];
        rt.held_bytes = rt.held_bytes.saturating_sub(self.sc.packet_bytes);
    }

    fn occupancy(&self, node: NodeId) -> u32 {
        let rt = &self.nodes[node.index()];
        rt.background + rt.held_bytes
    }

    fn try_start(&mut self, node: NodeId) {
        loop {
            let rt = &mut self.nodes[node.index()];
            if !rt.alive || rt.current.is_some() {
                return;
            }
            let Some(p) = rt.queue.pop_front() else { return };
            let now = self.now();
            let decision = self.decide(node, p, now);
            match decision {
                ForwardDecision::Drop { reason } => {
                    self.packets[p].location = Location::Gone;
                    self.release(node);
                    let fate = match reason {
                        DropReason::Expired => Fate::Expired,
                        DropReason::NoRoute => Fate::DroppedNoRoute,
                    };
                    self.resolve(p, fate, now);
                }
                ForwardDecision::Forward { next, .. } | ForwardDecision::Jump { next } => {
                    let (jump, class) = match decision {
                        ForwardDecision::Forward { rate, .. } => (false, rate),
                        _ => (true, self.packets[p].packet.rate_class),
                    };
                    let wait = f64::from(self.nodes[node.index()].background) * 8.0 / self.sc.radio.bandwidth;
                    let service = wait + sample_delay(&self.sc.radio, &mut self.rng) * self.sc.rates.of(class);
                    self.packets[p].location = Location::Sending(node);
                    self.nodes[node.index()].current = Some(Tx { packet: p, target: next, jump, rate: class });
                    self.queue.schedule(now + service, EventKind::TxComplete { node });
                    return;
                }
            }
        }
    }

    fn decide(&mut self, node: NodeId, p: usize, now: Millis) -> ForwardDecision {
        let packet = &mut self.packets[p].packet;
        match self.protocol.baseline() {
            Some(kind) => baseline_next_hop(
                kind,
                self.topo,
                node,
                &self.fcs_view[node.index()],
                &self.neighbors[node.index()],
                packet,
                now,
            ),
            None => {
                let env = DecisionEnv { topo: self.topo, estimates: &self.estimates };
                let dn = self.dmrf[node.index()].as_mut().expect("live node has protocol state");
                dn.select_next_hop(packet, now, &env, &mut self.rng)
            }
        }
    }

    fn on_tx_complete(&mut self, node: NodeId) {
        let now = self.now();
        let Some(tx) = self.nodes[node.index()].current else { return };
        let bits = self.sc.packet_bits();
        let dist = self.topo.distance(node, tx.target);
        let joules = energy_cost(&self.sc.radio, dist, bits).expect("targets lie within range");
        self.metrics.energy_total += joules;
        self.metrics.node_tx[node.index()] += 1;
        if tx.jump {
            self.metrics.jump_transmissions += 1;
        }
        let mode = if tx.jump { "jump" } else { "forward" };
        let detail = format!("to={} mode={mode} rate={} energy={joules}", tx.target.0, tx.rate.as_str());
        self.record("TX_COMPLETE", Some(node), Some(tx.packet), Some(detail));

        if self.packets[tx.packet].fate.is_some() {
            self.nodes[node.index()].current = None;
            self.release(node);
            self.try_start(node);
            return;
        }

        let receiver = tx.target;
        let sink = self.topo.sink();
        let alive = self.nodes[receiver.index()].alive;
        let fits = receiver == sink || self.occupancy(receiver) + self.sc.packet_bytes <= self.sc.buffer_bytes;
        if alive && fits {
            self.nodes[node.index()].current = None;
            self.release(node);
            if let Some(dn) = self.dmrf.get_mut(node.index()).and_then(Option::as_mut) {
                if tx.jump {
                    dn.on_jump_result(receiver, true, None, 0);
                } else {
                    dn.on_forward_result(receiver, true);
                }
            }
            let mode = if tx.jump { TransmitMode::Jump } else { TransmitMode::HopByHop };
            let slot = &mut self.packets[tx.packet];
            slot.packet.record_hop(receiver);
            slot.packet.mode = mode;
            slot.modes.push(mode);
            slot.location = Location::Arriving(receiver);
            if receiver != sink {
                self.nodes[receiver.index()].held_bytes += self.sc.packet_bytes;
            }
            self.queue.schedule(now, EventKind::PacketArrival { node: receiver, packet: tx.packet });
            self.try_start(node);
            return;
        }

        if alive {
            self.record("BUFFER_OVERFLOW", Some(receiver), Some(tx.packet), None);
        }
        if self.protocol.baseline().is_some() {
            self.nodes[node.index()].current = None;
            self.release(node);
            self.packets[tx.packet].location = Location::Gone;
            let fate = if alive { Fate::BufferDrop } else { Fate::DroppedNoRoute };
            self.resolve(tx.packet, fate, now);
            self.try_start(node);
        } else {
            self.queue.schedule(now + self.sc.ack_timeout, EventKind::AckTimeout { node });
        }
    }

    fn on_ack_timeout(&mut self, node: NodeId) {
        let Some(tx) = self.nodes[node.index()].current.take() else { return };
        self.record("ACK_TIMEOUT", Some(node), Some(tx.packet), Some(format!("to={}", tx.target.0)));
        if self.packets[tx.packet].fate.is_some() {
            self.release(node);
            self.try_start(node);
            return;
        }
        let trace = self.packets[tx.packet].packet.hop_trace.clone();
        let id = self.packets[tx.packet].packet.id;
        let dn = self.dmrf[node.index()].as_mut().expect("only the protocol under test waits for acks");
        let before = dn.state;
        if tx.jump {
            let upstream: Vec<NodeId> = trace[..trace.len() - 1].to_vec();
            let hop_limit = upstream.len() as u32;
            if let Some(msg) = dn.on_jump_result(tx.target, false, Some(id), hop_limit) {
                self.send_along(node, msg, upstream);
            }
        } else if let Some(msg) = dn.on_forward_result(tx.target, false) {
            self.note_state(node, before);
            self.broadcast_upstream(node, msg);
        }
        self.packets[tx.packet].location = Location::Queued(node);
        self.nodes[node.index()].queue.push_front(tx.packet);
        self.try_start(node);
    }

    fn on_arrival(&mut self, node: NodeId, p: usize) {
        let now = self.now();
        self.record("PACKET_ARRIVAL", Some(node), Some(p), None);
        if self.packets[p].fate.is_some() {
            return;
        }
        if node == self.topo.sink() {
            self.packets[p].location = Location::Gone;
            let fate = if now <= self.packets[p].packet.deadline { Fate::Delivered } else { Fate::Expired };
            self.resolve(p, fate, now);
            return;
        }
        self.packets[p].location = Location::Queued(node);
        let prev = self.packets[p].packet.previous_hop();
        let rt = &mut self.nodes[node.index()];
        rt.queue.push_back(p);
        rt.window_arrivals += 1;
        if let (Some(prev), Some(dn)) = (prev, self.dmrf.get_mut(node.index()).and_then(Option::as_mut)) {
            dn.note_upstream(prev);
        }
        self.check_congestion(node);
        self.try_start(node);
    }

    fn on_deadline(&mut self, p: usize) {
        if self.packets[p].fate.is_some() {
            return;
        }
        let now = self.now();
        match self.packets[p].location {
            Location::Queued(n) => {
                self.nodes[n.index()].queue.retain(|&q| q != p);
                self.release(n);
            }
            Location::Arriving(n) if n != self.topo.sink() => self.release(n),
            // Released when the transmission or acknowledgement wait ends.
            Location::Sending(_) | Location::Arriving(_) | Location::Gone => {}
        }
        if !matches!(self.packets[p].location, Location::Sending(_)) {
            self.packets[p].location = Location::Gone;
        }
        self.resolve(p, Fate::Expired, now);
    }

    fn on_probe(&mut self, node: NodeId) {
        let now = self.now();
        if !self.nodes[node.index()].alive {
            return;
        }
        self.record("PROBE", Some(node), None, None);
        let interval = self.sc.probe.interval;
        {
            let rt = &mut self.nodes[node.index()];
            let inst = f64::from(rt.window_arrivals) / interval;
            rt.arrival_rate = if rt.probed_once { RATE_EWMA * inst + (1.0 - RATE_EWMA) * rt.arrival_rate } else { inst };
            rt.window_arrivals = 0;
        }
        if self.protocol == ProtocolKind::Dmrf && !self.nodes[node.index()].probed_once {
            let before = self.dmrf[node.index()].as_ref().map(|d| d.state);
            let msg = self.dmrf[node.index()].as_mut().and_then(DmrfNode::detect_void);
            if let (Some(msg), Some(before)) = (msg, before) {
                self.note_state(node, before);
                self.broadcast_upstream(node, msg);
            }
        }
        self.nodes[node.index()].probed_once = true;
        self.check_congestion(node);

        let pkt = f64::from(self.sc.packet_bytes);
        let members: Vec<NodeId> = self.fcs_view[node.index()].iter().map(|e| e.candidate).collect();
        // A reply reports one measured link delay, inflated by the member's backlog.
        let mut replies = Vec::with_capacity(members.len());
        for &c in &members {
            let delay_est = if self.nodes[c.index()].alive {
                let link = sample_delay(&self.sc.radio, &mut self.rng);
                Some(link * (1.0 + f64::from(self.occupancy(c)) / pkt))
            } else {
                None
            };
            replies.push(ProbeReply { candidate: c, delay_est });
        }
        if self.sc.probe.count_in_control && !members.is_empty() {
            self.control(1);
        }
        self.probe_rounds.push(replies);
        let round = self.probe_rounds.len() - 1;
        self.queue.schedule(now + self.sc.probe.timeout, EventKind::ProbeTimeout { node, round });
        let next = now + interval;
        if next <= self.sc.horizon {
            self.queue.schedule(next, EventKind::Probe { node });
        }
    }

    fn on_probe_timeout(&mut self, node: NodeId, round: usize) {
        if !self.nodes[node.index()].alive {
            return;
        }
        let replies = std::mem::take(&mut self.probe_rounds[round]);
        for r in &replies {
            if let Some(d) = r.delay_est {
                if let Some(e) = self.fcs_view[node.index()].iter_mut().find(|e| e.candidate == r.candidate) {
                    e.delay_est = d;
                }
            }
        }
        if let Some(dn) = self.dmrf.get_mut(node.index()).and_then(Option::as_mut) {
            let before = dn.state;
            let out = dn.detect_faulty(&replies);
            for (id, s) in &out.updates {
                self.record("CANDIDATE_STATE", Some(node), None, Some(format!("{}={}", id.0, s.as_str())));
            }
            if let Some(msg) = out.feedback {
                self.note_state(node, before);
                self.broadcast_upstream(node, msg);
            }
        }
    }

    fn check_congestion(&mut self, node: NodeId) {
        if node == self.topo.sink() || node == self.topo.source() {
            return;
        }
        let used = f64::from(self.occupancy(node));
        let rate = self.nodes[node.index()].arrival_rate;
        let cap = f64::from(self.sc.buffer_bytes);
        let pkt = f64::from(self.sc.packet_bytes);
        let Some(dn) = self.dmrf.get_mut(node.index()).and_then(Option::as_mut) else { return };
        let before = dn.state;
        if let Some(msg) = dn.detect_congestion(used, cap, pkt, rate).feedback {
            self.note_state(node, before);
            self.broadcast_upstream(node, msg);
        }
    }

    fn note_state(&mut self, node: NodeId, before: crate::model::NodeState) {
        if self.sc.record_trace {
            if let Some(dn) = self.dmrf.get(node.index()).and_then(Option::as_ref) {
                let fcs: Vec<&str> = dn.table.fcs_states().into_iter().map(|s| s.as_str()).collect();
                let detail = format!("{}->{} fcs={}", before.as_str(), dn.state.as_str(), fcs.join(","));
                self.record("STATE_CHANGE", Some(node), None, Some(detail));
            }
        }
    }

    fn control_delay(&self) -> Millis {
        f64::from(self.sc.control_bytes * 8) / self.sc.radio.bandwidth
    }

    fn post(&mut self, env: Envelope) {
        self.envelopes.push(env);
        let delivery = self.envelopes.len() - 1;
        let at = self.now() + self.control_delay();
        self.queue.schedule(at, EventKind::FeedbackDelivery { delivery });
    }

    fn broadcast_upstream(&mut self, node: NodeId, msg: FeedbackMessage) {
        for up in self.upstream[node.index()].clone() {
            self.post(Envelope { msg: msg.clone(), from: node, to: up, route: Vec::new() });
        }
    }

    /// Sends `msg` to the last node of `route`, keeping the rest for onward
    /// forwarding.
    fn send_along(&mut self, from: NodeId, msg: FeedbackMessage, mut route: Vec<NodeId>) {
        if let Some(to) = route.pop() {
            self.post(Envelope { msg, from, to, route });
        }
    }

    fn on_feedback(&mut self, delivery: usize) {
        let now = self.now();
        let env = std::mem::replace(
            &mut self.envelopes[delivery],
            Envelope {
                msg: FeedbackMessage::state_report(FeedbackKind::Recover, NodeId(0)),
                from: NodeId(0),
                to: NodeId(0),
                route: Vec::new(),
            },
        );
        let to = env.to;
        self.control(1);
        self.record("FEEDBACK_DELIVERY", Some(to), None, Some(format!("{}:{}", env.msg.kind.as_str(), env.msg.subject.0)));
        if !self.nodes[to.index()].alive {
            return;
        }
        let Some(dn) = self.dmrf.get_mut(to.index()).and_then(Option::as_mut) else { return };
        let before = dn.state;
        let out = dn.on_feedback(env.from, &env.msg, now, &mut self.rng);
        for msg in out {
            if msg.kind == FeedbackKind::JumpFail {
                self.send_along(to, msg, env.route.clone());
            } else {
                self.note_state(to, before);
                self.broadcast_upstream(to, msg);
            }
        }
    }

    fn finish(mut self) -> RunOutput {
        let delays: Vec<Millis> = self
            .packets
            .iter()
            .filter(|s| s.fate == Some(Fate::Delivered))
            .map(|s| s.finished_at - s.packet.created_at)
            .collect();
        self.metrics.set_delays(delays);
        let packets = self
            .packets
            .into_iter()
            .map(|s| PacketOutcome {
                id: s.packet.id,
                fate: s.fate.expect("every packet resolved"),
                created_at: s.packet.created_at,
                deadline: s.packet.deadline,
                finished_at: s.finished_at,
                hop_trace: s.packet.hop_trace,
                modes: s.modes,
            })
            .collect();
        RunOutput { metrics: self.metrics, packets, trace: self.trace, paths: self.paths }
    }
}
