//! The deadline-aware jumping routing protocol.

mod jump;
mod node;
mod thresholds;

pub use jump::{apply_jump_result, choose_jump_target, choose_jump_target_where, jump_probabilities, scale_success};
pub use node::{
    CongestionOutcome, CongestionParams, DecisionEnv, DetectionOutcome, DmrfNode, DmrfParams, DropReason,
    ForwardDecision, ProbeReply, RoutingTable,
};
pub use thresholds::{
    compute_lambda, compute_thresholds, Band, ThresholdError, Thresholds, DEFAULT_THETA_JUMP, MIN_BAND_GAP, OMEGA_MIN,
};
