//! TOML scenario files: parsing, reference defaults and validation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Millis;
use crate::protocol::{CongestionParams, DmrfParams};
use crate::sim::{ProbeParams, ProtocolKind, RadioModel, RateMultipliers, Scenario, ScenarioError};
use crate::topology::{carve_void, deploy, shortest_delay, Distribution, Point, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration is empty")]
    Empty,
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
    }
}

impl From<ScenarioError> for ConfigError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid { field, reason } => ConfigError::invalid(field, reason),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConstants {
    pub eps_elec: f64,
    pub eps_amp: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self { eps_elec: RadioModel::DEFAULT_EPS_ELEC, eps_amp: RadioModel::DEFAULT_EPS_AMP }
    }
}

/// How the relative deadline of each packet is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifetime {
    /// Fixed lifetime in ms.
    Fixed(Millis),
    /// Multiple of the source's shortest-path delay estimate.
    Factor(f64),
}

/// Fully resolved scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub region: (f64, f64),
    pub distribution: Distribution,
    pub comm_radius: f64,
    pub max_tx_distance: f64,
    /// Kilobits per second.
    pub bandwidth_kbps: f64,
    pub sigma_ratio: f64,
    pub buffer_bytes: u32,
    pub packet_bytes: u32,
    pub packet_count: u32,
    pub lifetime: Lifetime,
    pub injection_interval: Millis,
    pub horizon: Millis,
    pub protocol: ProtocolKind,
    pub fault_ratio: f64,
    pub buffer_fill: f64,
    pub void_center: (f64, f64),
    pub void_radius: f64,
    pub paths_m: usize,
    pub paths_k: usize,
    pub theta_jump: f64,
    pub theta_cong: f64,
    pub rates: RateMultipliers,
    pub energy: EnergyConstants,
    pub probe: ProbeParams,
    pub seed: u64,
    pub repetitions: usize,
}

impl ScenarioConfig {
    /// 400 nodes on a 20 m x 20 m grid, 200 kb/s, 100-byte buffers, 32-byte
    /// packets and a 30 m maximum range.
    pub fn reference() -> Self {
        Self {
            node_count: 400,
            region: (20.0, 20.0),
            distribution: Distribution::UniformGrid,
            comm_radius: 1.5,
            max_tx_distance: 30.0,
            bandwidth_kbps: 200.0,
            sigma_ratio: RadioModel::DEFAULT_SIGMA_RATIO,
            buffer_bytes: 100,
            packet_bytes: 32,
            packet_count: 100,
            lifetime: Lifetime::Fixed(150.0),
            injection_interval: 5.0,
            horizon: 10_000.0,
            protocol: ProtocolKind::Dmrf,
            fault_ratio: 0.0,
            buffer_fill: 0.0,
            void_center: (10.0, 10.0),
            void_radius: 0.0,
            paths_m: 4,
            paths_k: 2,
            theta_jump: crate::protocol::DEFAULT_THETA_JUMP,
            theta_cong: CongestionParams::default().theta_cong,
            rates: RateMultipliers::default(),
            energy: EnergyConstants::default(),
            probe: ProbeParams::default(),
            seed: 1,
            repetitions: 10,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, reason: &str| if ok { Ok(()) } else { Err(ConfigError::invalid(key, reason)) };
        check(self.node_count >= 2, "node_count", "must be at least 2")?;
        check(self.region.0 > 0.0 && self.region.1 > 0.0, "region", "sides must be positive")?;
        check(self.comm_radius > 0.0, "comm_radius", "must be positive")?;
        check(self.max_tx_distance >= self.comm_radius, "max_tx_distance", "must be at least comm_radius")?;
        check(self.bandwidth_kbps > 0.0 && self.bandwidth_kbps.is_finite(), "bandwidth_kbps", "must be positive")?;
        check(self.sigma_ratio >= 0.0 && self.sigma_ratio.is_finite(), "sigma_ratio", "must be non-negative")?;
        check(self.buffer_bytes > 0, "buffer_bytes", "must be positive")?;
        check(self.packet_bytes > 0, "packet_bytes", "must be positive")?;
        check(self.packet_bytes <= self.buffer_bytes, "packet_bytes", "must not exceed buffer_bytes")?;
        match self.lifetime {
            Lifetime::Fixed(l) => check(l > 0.0 && l.is_finite(), "packet_lifetime", "must be positive")?,
            Lifetime::Factor(f) => check(f > 0.0 && f.is_finite(), "lifetime_factor", "must be positive")?,
        }
        check(self.injection_interval >= 0.0, "injection_interval", "must be non-negative")?;
        check(self.horizon > 0.0, "horizon", "must be positive")?;
        check((0.0..=1.0).contains(&self.fault_ratio), "fault_ratio", "must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&self.buffer_fill), "buffer_fill", "must lie in [0, 1]")?;
        check(self.void_radius >= 0.0 && self.void_radius.is_finite(), "void_radius", "must be non-negative")?;
        check(self.paths_m >= 1, "paths_m", "must be at least 1")?;
        check(self.paths_k >= 1 && self.paths_k <= self.paths_m, "paths_k", "must lie in [1, paths_m]")?;
        check(self.theta_jump > 0.0 && self.theta_jump < 1.0, "theta_jump", "must lie in (0, 1)")?;
        check(self.theta_cong > 0.0 && self.theta_cong <= 1.0, "theta_cong", "must lie in (0, 1]")?;
        let r = &self.rates;
        check(r.low > 0.0 && r.medium > 0.0 && r.high > 0.0, "rate_multipliers", "must be positive")?;
        check(self.energy.eps_elec >= 0.0 && self.energy.eps_amp >= 0.0, "energy", "must be non-negative")?;
        check(self.probe.interval > 0.0, "probe.interval", "must be positive")?;
        check(self.probe.timeout >= 0.0, "probe.timeout", "must be non-negative")?;
        check(self.repetitions >= 1, "repetitions", "must be at least 1")?;
        Ok(())
    }

    /// Deploys the nodes and carves the void. Random deployments draw their
    /// positions from `seed`.
    pub fn topology(&self, seed: u64) -> Result<Topology, TopologyError> {
        let topo = deploy(self.node_count, self.region, self.distribution, seed)?
            .with_radio(self.comm_radius, self.max_tx_distance)?;
        if self.void_radius > 0.0 {
            let (x, y) = self.void_center;
            Ok(carve_void(&topo, Point::new(x, y), self.void_radius))
        } else {
            Ok(topo)
        }
    }

    pub fn radio(&self) -> RadioModel {
        let mut radio = RadioModel::new(
            self.bandwidth_kbps,
            self.packet_bytes * 8,
            self.sigma_ratio,
            self.max_tx_distance,
        );
        radio.eps_elec = self.energy.eps_elec;
        radio.eps_amp = self.energy.eps_amp;
        radio
    }

    /// Engine scenario for `topo`; a relative lifetime is resolved against
    /// the source's shortest-path estimate.
    pub fn scenario(&self, topo: &Topology) -> Result<Scenario, ConfigError> {
        let radio = self.radio();
        let lifetime = match self.lifetime {
            Lifetime::Fixed(l) => l,
            Lifetime::Factor(f) => {
                let est = shortest_delay(topo, topo.source(), radio.mean_delay);
                if !est.is_finite() {
                    return Err(ConfigError::invalid("lifetime_factor", "source cannot reach the sink"));
                }
                f * est
            }
        };
        let mut dmrf = DmrfParams::with_mean_hop_delay(radio.mean_delay);
        dmrf.theta_jump = self.theta_jump;
        dmrf.congestion.theta_cong = self.theta_cong;
        let scenario = Scenario {
            radio,
            buffer_bytes: self.buffer_bytes,
            packet_bytes: self.packet_bytes,
            packet_count: self.packet_count,
            lifetime,
            injection_interval: self.injection_interval,
            fault_ratio: self.fault_ratio,
            buffer_fill: self.buffer_fill,
            dmrf,
            rates: self.rates,
            probe: self.probe,
            horizon: self.horizon,
            paths_m: self.paths_m,
            paths_k: self.paths_k,
            ..Scenario::reference()
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Sets one sweepable field from its numeric value.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        let count = |v: f64| -> Result<usize, ConfigError> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ConfigError::invalid(name, "must be a non-negative integer"))
            }
        };
        match name {
            "fault_ratio" => self.fault_ratio = value,
            "buffer_fill" => self.buffer_fill = value,
            "void_radius" => self.void_radius = value,
            "packet_lifetime" => self.lifetime = Lifetime::Fixed(value),
            "lifetime_factor" => self.lifetime = Lifetime::Factor(value),
            "theta_jump" => self.theta_jump = value,
            "theta_cong" => self.theta_cong = value,
            "injection_interval" => self.injection_interval = value,
            "packet_count" => self.packet_count = count(value)? as u32,
            "node_count" => {
                // Keep the lattice spacing, and so the density, of the base
                // configuration.
                let old_side = (self.node_count as f64).sqrt().ceil().max(2.0) - 1.0;
                let n = count(value)?;
                let new_side = (n as f64).sqrt().ceil().max(2.0) - 1.0;
                let scale = new_side / old_side;
                self.region = (self.region.0 * scale, self.region.1 * scale);
                self.void_center = (self.void_center.0 * scale, self.void_center.1 * scale);
                self.node_count = n;
            }
            _ => return Err(ConfigError::invalid(name, "not a sweepable parameter")),
        }
        self.validate()
    }
}

pub const SWEEPABLE: [&str; 10] = [
    "fault_ratio",
    "buffer_fill",
    "void_radius",
    "packet_lifetime",
    "lifetime_factor",
    "theta_jump",
    "theta_cong",
    "injection_interval",
    "packet_count",
    "node_count",
];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    low: Option<f64>,
    medium: Option<f64>,
    high: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    eps_elec: Option<f64>,
    eps_amp: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    interval: Option<f64>,
    timeout: Option<f64>,
    count_in_control: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    node_count: Option<usize>,
    region: Option<[f64; 2]>,
    distribution: Option<Distribution>,
    comm_radius: Option<f64>,
    max_tx_distance: Option<f64>,
    bandwidth_kbps: Option<f64>,
    sigma_ratio: Option<f64>,
    buffer_bytes: Option<u32>,
    packet_bytes: Option<u32>,
    packet_count: Option<u32>,
    packet_lifetime: Option<f64>,
    lifetime_factor: Option<f64>,
    injection_interval: Option<f64>,
    horizon: Option<f64>,
    protocol: Option<ProtocolKind>,
    fault_ratio: Option<f64>,
    buffer_fill: Option<f64>,
    void_center: Option<[f64; 2]>,
    void_radius: Option<f64>,
    paths_m: Option<usize>,
    paths_k: Option<usize>,
    theta_jump: Option<f64>,
    theta_cong: Option<f64>,
    rate_multipliers: Option<RawRates>,
    energy: Option<RawEnergy>,
    probe: Option<RawProbe>,
    seed: Option<u64>,
    repetitions: Option<usize>,
}

fn apply<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Parses TOML text. Keys absent from the file keep their reference values.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    if text.trim().is_empty() {
        return Err(ConfigError::Empty);
    }
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
    let mut c = match raw.preset.as_deref() {
        None | Some("reference") => ScenarioConfig::reference(),
        Some(other) => return Err(ConfigError::invalid("preset", format!("unknown preset `{other}`"))),
    };
    apply(&mut c.node_count, raw.node_count);
    apply(&mut c.region, raw.region.map(|[w, h]| (w, h)));
    apply(&mut c.distribution, raw.distribution);
    apply(&mut c.comm_radius, raw.comm_radius);
    apply(&mut c.max_tx_distance, raw.max_tx_distance);
    apply(&mut c.bandwidth_kbps, raw.bandwidth_kbps);
    apply(&mut c.sigma_ratio, raw.sigma_ratio);
    apply(&mut c.buffer_bytes, raw.buffer_bytes);
    apply(&mut c.packet_bytes, raw.packet_bytes);
    apply(&mut c.packet_count, raw.packet_count);
    match (raw.packet_lifetime, raw.lifetime_factor) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::invalid("lifetime_factor", "conflicts with packet_lifetime"));
        }
        (Some(l), None) => c.lifetime = Lifetime::Fixed(l),
        (None, Some(f)) => c.lifetime = Lifetime::Factor(f),
        (None, None) => {}
    }
    apply(&mut c.injection_interval, raw.injection_interval);
    apply(&mut c.horizon, raw.horizon);
    apply(&mut c.protocol, raw.protocol);
    apply(&mut c.fault_ratio, raw.fault_ratio);
    apply(&mut c.buffer_fill, raw.buffer_fill);
    apply(&mut c.void_center, raw.void_center.map(|[x, y]| (x, y)));
    apply(&mut c.void_radius, raw.void_radius);
    apply(&mut c.paths_m, raw.paths_m);
    apply(&mut c.paths_k, raw.paths_k);
    apply(&mut c.theta_jump, raw.theta_jump);
    apply(&mut c.theta_cong, raw.theta_cong);
    if let Some(r) = raw.rate_multipliers {
        apply(&mut c.rates.low, r.low);
        apply(&mut c.rates.medium, r.medium);
        apply(&mut c.rates.high, r.high);
    }
    if let Some(e) = raw.energy {
        apply(&mut c.energy.eps_elec, e.eps_elec);
        apply(&mut c.energy.eps_amp, e.eps_amp);
    }
    if let Some(p) = raw.probe {
        apply(&mut c.probe.interval, p.interval);
        apply(&mut c.probe.timeout, p.timeout);
        apply(&mut c.probe.count_in_control, p.count_in_control);
    }
    apply(&mut c.seed, raw.seed);
    apply(&mut c.repetitions, raw.repetitions);
    c.validate()?;
    Ok(c)
}

pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NodeId;

    fn invalid_key(r: Result<ScenarioConfig, ConfigError>) -> String {
        match r {
            Err(ConfigError::Invalid { key, .. }) => key,
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    #[test]
    fn reference_preset() {
        let c = parse_config_str("preset = \"reference\"\n").unwrap();
        assert_eq!(c, ScenarioConfig::reference());
        assert_eq!(c.node_count, 400);
        assert_eq!(c.region, (20.0, 20.0));
        assert_eq!(c.bandwidth_kbps, 200.0);
        assert_eq!((c.buffer_bytes, c.packet_bytes), (100, 32));
        assert_eq!(c.max_tx_distance, 30.0);
        assert!((c.radio().mean_delay - 1.28).abs() < 1e-12);
    }

    #[test]
    fn overrides_and_tables() {
        let text = r#"
            protocol = "GREEDY_MIN_DELAY"
            distribution = "random"
            fault_ratio = 0.3
            lifetime_factor = 3.0
            [rate_multipliers]
            low = 2.0
            [probe]
            count_in_control = false
        "#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.protocol, ProtocolKind::GreedyMinDelay);
        assert_eq!(c.distribution, Distribution::Random);
        assert_eq!(c.fault_ratio, 0.3);
        assert_eq!(c.lifetime, Lifetime::Factor(3.0));
        assert_eq!(c.rates.low, 2.0);
        assert_eq!(c.rates.medium, 1.0);
        assert!(!c.probe.count_in_control);
    }

    #[test]
    fn domain_errors_name_the_key() {
        assert_eq!(invalid_key(parse_config_str("fault_ratio = 1.5")), "fault_ratio");
        assert_eq!(invalid_key(parse_config_str("buffer_fill = -0.1")), "buffer_fill");
        assert_eq!(invalid_key(parse_config_str("paths_k = 5")), "paths_k");
        assert_eq!(invalid_key(parse_config_str("preset = \"table9\"")), "preset");
        assert_eq!(invalid_key(parse_config_str("packet_lifetime = 50\nlifetime_factor = 3")), "lifetime_factor");
        assert_eq!(invalid_key(parse_config_str("comm_radius = 40")), "max_tx_distance");
    }

    #[test]
    fn syntax_and_unknown_keys() {
        assert!(matches!(parse_config_str(""), Err(ConfigError::Empty)));
        assert!(matches!(parse_config_str("  \n"), Err(ConfigError::Empty)));
        assert!(matches!(parse_config_str("node_count = "), Err(ConfigError::Parse(_))));
        match parse_config_str("colour = 3") {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("colour"), "{msg}"),
            other => panic!("{other:?}"),
        }
        match parse_config_str("[probe]\nperiod = 3") {
            Err(ConfigError::Parse(msg)) => assert!(msg.contains("period"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        let err = parse_config(Path::new("/nonexistent/scenario.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }

    #[test]
    fn node_count_keeps_density() {
        let mut c = ScenarioConfig::reference();
        c.set_param("node_count", 100.0).unwrap();
        let t = c.topology(0).unwrap();
        let a = t.position(NodeId(0)).unwrap();
        let b = t.position(NodeId(1)).unwrap();
        assert!((a.dist(&b) - 20.0 / 19.0).abs() < 1e-9);
        assert_eq!(t.len(), 100);
        assert!(c.set_param("node_count", 10.5).is_err());
        assert!(c.set_param("colour", 1.0).is_err());
    }

    #[test]
    fn relative_lifetime_resolves_against_shortest_path() {
        let mut c = ScenarioConfig::reference();
        c.lifetime = Lifetime::Factor(3.0);
        let t = c.topology(0).unwrap();
        let s = c.scenario(&t).unwrap();
        assert!((s.lifetime - 3.0 * 19.0 * 1.28).abs() < 1e-9);
    }

    #[test]
    fn void_is_carved() {
        let mut c = ScenarioConfig::reference();
        c.void_radius = 3.0;
        assert!(c.topology(0).unwrap().len() < 400);
    }
}
