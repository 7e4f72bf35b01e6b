//! Per-hop delay sampling and first-order radio energy.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Millis;

#[derive(Debug, Error, PartialEq)]
pub enum RadioError {
    #[error("transmission over {distance} m exceeds the maximum range of {max} m")]
    OutOfRange { distance: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioModel {
    /// Bits per millisecond.
    pub bandwidth: f64,
    /// Mean per-hop delay μ.
    pub mean_delay: Millis,
    pub sigma: Millis,
    pub max_tx_distance: f64,
    /// Electronics energy, J/bit.
    pub eps_elec: f64,
    /// Amplifier energy, J/bit/m².
    pub eps_amp: f64,
}

impl RadioModel {
    pub const DEFAULT_EPS_ELEC: f64 = 50e-9;
    pub const DEFAULT_EPS_AMP: f64 = 100e-12;
    pub const DEFAULT_SIGMA_RATIO: f64 = 0.15;

    /// Mean delay `packet_bits / bandwidth`, σ as a fraction of it.
    pub fn new(bandwidth: f64, packet_bits: u32, sigma_ratio: f64, max_tx_distance: f64) -> Self {
        let mean_delay = f64::from(packet_bits) / bandwidth;
        Self {
            bandwidth,
            mean_delay,
            sigma: sigma_ratio * mean_delay,
            max_tx_distance,
            eps_elec: Self::DEFAULT_EPS_ELEC,
            eps_amp: Self::DEFAULT_EPS_AMP,
        }
    }

    /// 200 kb/s, 32-byte packets, 30 m range.
    pub fn reference() -> Self {
        Self::new(200.0, 256, Self::DEFAULT_SIGMA_RATIO, 30.0)
    }

    pub fn airtime(&self, bits: u32) -> Millis {
        f64::from(bits) / self.bandwidth
    }
}

/// Normal(μ, σ²) truncated below at μ/10 by rejection.
pub fn sample_delay<R: Rng + ?Sized>(radio: &RadioModel, rng: &mut R) -> Millis {
    let mu = radio.mean_delay;
    if radio.sigma <= 0.0 {
        return mu;
    }
    let normal = Normal::new(mu, radio.sigma).expect("finite positive sigma");
    let floor = mu / 10.0;
    loop {
        let x = normal.sample(rng);
        if x >= floor {
            return x;
        }
    }
}

/// `bits * (ε_elec + ε_amp * d²)` joules.
pub fn energy_cost(radio: &RadioModel, distance: f64, bits: u32) -> Result<f64, RadioError> {
    if distance > radio.max_tx_distance {
        return Err(RadioError::OutOfRange { distance, max: radio.max_tx_distance });
    }
    Ok(f64::from(bits) * (radio.eps_elec + radio.eps_amp * distance * distance))
}
