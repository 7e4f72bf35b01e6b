//! Shared fixtures for the benchmarks.

use dmrf_core::harness::ScenarioConfig;
use dmrf_core::{Scenario, Topology};

/// The 400-node grid, optionally with a central void.
pub fn grid(void_radius: f64) -> (Topology, Scenario) {
    let mut cfg = ScenarioConfig::reference();
    cfg.void_radius = void_radius;
    let topo = cfg.topology(0).expect("reference deploys");
    let scenario = cfg.scenario(&topo).expect("reference validates");
    (topo, scenario)
}
