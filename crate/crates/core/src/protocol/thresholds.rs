//! Remaining-time factor and the rate-band thresholds derived from local
//! delay information.

use thiserror::Error;

use crate::model::{Millis, RateClass};

/// Lower clamp on the slack ratio used in the low threshold.
pub const OMEGA_MIN: f64 = 1e-3;
/// Smallest gap kept between adjacent thresholds.
pub const MIN_BAND_GAP: f64 = 1e-3;
pub const DEFAULT_THETA_JUMP: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("estimated transmission time must be positive, got {0} ms")]
    NonPositiveEstimate(Millis),
    #[error("no route to the sink")]
    NoRoute,
    #[error("jump threshold must lie in (0, 1), got {0}")]
    InvalidJumpThreshold(f64),
}

/// Slack ratio `L / T`: remaining lifetime over the estimated time still
/// needed. Expired packets map to 0, as does an unreachable sink.
pub fn compute_lambda(remaining: Millis, estimate: Millis) -> Result<f64, ThresholdError> {
    if estimate.is_nan() || estimate <= 0.0 {
        return Err(ThresholdError::NonPositiveEstimate(estimate));
    }
    if remaining <= 0.0 || estimate.is_infinite() {
        return Ok(0.0);
    }
    Ok(remaining / estimate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub theta_low: f64,
    pub theta_high: f64,
    pub theta_jump: f64,
    pub omega: f64,
}

/// Outcome of placing a slack ratio against the thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Low,
    Medium,
    High,
    Jump,
}

impl Band {
    pub fn rate_class(self) -> Option<RateClass> {
        match self {
            Band::Low => Some(RateClass::Low),
            Band::Medium => Some(RateClass::Medium),
            Band::High => Some(RateClass::High),
            Band::Jump => None,
        }
    }
}

impl Thresholds {
    pub fn band(&self, lambda: f64) -> Band {
        if lambda >= self.theta_low {
            Band::Low
        } else if lambda >= self.theta_high {
            Band::Medium
        } else if lambda > self.theta_jump {
            Band::High
        } else {
            Band::Jump
        }
    }
}

/// `θ_high = θ_jump + max_fcs_delay / T`, `ω = (L - max_next_hop_delay) / T`
/// clamped to `[OMEGA_MIN, 1]`, `θ_low = θ_high / ω + μ / T`.
///
/// Both derived thresholds are additionally kept at least `MIN_BAND_GAP`
/// above the one below, so the ordering survives a zero neighbour delay or
/// a negligible `μ / T`.
pub fn compute_thresholds(
    theta_jump: f64,
    estimate: Millis,
    max_fcs_delay: Millis,
    max_next_hop_delay: Millis,
    mean_hop_delay: Millis,
    remaining: Millis,
) -> Result<Thresholds, ThresholdError> {
    if !(theta_jump > 0.0 && theta_jump < 1.0) {
        return Err(ThresholdError::InvalidJumpThreshold(theta_jump));
    }
    if estimate.is_infinite() {
        return Err(ThresholdError::NoRoute);
    }
    if estimate.is_nan() || estimate <= 0.0 {
        return Err(ThresholdError::NonPositiveEstimate(estimate));
    }
    let omega = ((remaining - max_next_hop_delay) / estimate).clamp(OMEGA_MIN, 1.0);
    let theta_high = (theta_jump + max_fcs_delay.max(0.0) / estimate).max(theta_jump + MIN_BAND_GAP);
    let theta_low = (theta_high / omega + mean_hop_delay.max(0.0) / estimate).max(theta_high + MIN_BAND_GAP);
    Ok(Thresholds { theta_low, theta_high, theta_jump, omega })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_cases() {
        assert_eq!(compute_lambda(12.0, 10.0), Ok(1.2));
        assert_eq!(compute_lambda(10.0, 10.0), Ok(1.0));
        assert_eq!(compute_lambda(-1.0, 10.0), Ok(0.0));
        assert_eq!(compute_lambda(5.0, f64::INFINITY), Ok(0.0));
        assert_eq!(compute_lambda(5.0, 0.0), Err(ThresholdError::NonPositiveEstimate(0.0)));
    }

    #[test]
    fn worked_example() {
        let t = compute_thresholds(0.2, 10.0, 2.0, 2.0, 1.28, 12.0).unwrap();
        assert!((t.omega - 1.0).abs() < 1e-12);
        assert!((t.theta_high - 0.4).abs() < 1e-12);
        assert!((t.theta_low - 0.528).abs() < 1e-12);
        assert_eq!(t.band(1.2), Band::Low);
        assert_eq!(t.band(0.45), Band::Medium);
        assert_eq!(t.band(0.3), Band::High);
        assert_eq!(t.band(0.15), Band::Jump);
        assert_eq!(t.band(0.2), Band::Jump);
    }

    #[test]
    fn omega_clamps_at_floor() {
        let t = compute_thresholds(0.2, 10.0, 2.0, 2.0, 1.28, 2.0).unwrap();
        assert_eq!(t.omega, OMEGA_MIN);
        assert!((t.theta_low - (0.4 / OMEGA_MIN + 0.128)).abs() < 1e-9);
    }

    #[test]
    fn zero_neighbour_delay_keeps_ordering() {
        let t = compute_thresholds(0.2, 10.0, 0.0, 0.0, 1.28, 12.0).unwrap();
        assert!((t.theta_high - (0.2 + MIN_BAND_GAP)).abs() < 1e-12);
        assert!(t.theta_low > t.theta_high && t.theta_high > t.theta_jump);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            compute_thresholds(0.2, f64::INFINITY, 1.0, 1.0, 1.0, 1.0),
            Err(ThresholdError::NoRoute)
        );
        assert_eq!(
            compute_thresholds(1.0, 10.0, 1.0, 1.0, 1.0, 1.0),
            Err(ThresholdError::InvalidJumpThreshold(1.0))
        );
        assert!(compute_thresholds(0.2, 0.0, 1.0, 1.0, 1.0, 1.0).is_err());
    }
}
