//! Deadline-aware multipath routing with jumping for wireless sensor
//! networks, three comparison forwarders, a deterministic simulator and
//! an experiment harness.

pub mod baseline;
pub mod harness;
pub mod model;
pub mod protocol;
pub mod sim;
pub mod topology;

pub use baseline::{baseline_next_hop, BaselineKind};
pub use model::{
    make_packet, CandidateEntry, Confidence, FeedbackKind, FeedbackMessage, Millis, NodeId, NodeState, Packet,
    RateClass, TransmitMode,
};
pub use protocol::{DmrfNode, DmrfParams, DropReason, ForwardDecision};
pub use sim::{run, Fate, MetricsRecord, PacketOutcome, ProtocolKind, RunOutput, Scenario, ScenarioError};
pub use topology::{build_fcs, carve_void, deploy, Distribution, Point, Topology};
pub use harness::{parse_config, run_sweep, summarize, ScenarioConfig, SweepRow, SweepSpec};
