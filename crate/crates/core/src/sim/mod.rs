//! Discrete-event simulation of a single source-to-sink flow.

mod engine;
mod event;
mod faults;
mod metrics;
mod radio;
mod trace;

pub use engine::{run, ProbeParams, ProtocolKind, RateMultipliers, RunOutput, Scenario, ScenarioError};
pub use event::{Event, EventKind, EventQueue};
pub use faults::{inject_faults, preload_buffers};
pub use metrics::{percentile, Fate, MetricsRecord, PacketOutcome};
pub use radio::{energy_cost, sample_delay, RadioError, RadioModel};
pub use trace::{write_trace, TraceRecord};
