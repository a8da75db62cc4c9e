//! Fixtures shared by the benchmarks.

use intergrid_core::scenario::{generate_scenario, select_removals, ScenarioParams};
use intergrid_core::{InterdependentNetwork, Removals};

pub fn params(n: usize, seed: u64) -> ScenarioParams {
    ScenarioParams {
        n_power: n,
        n_comm: n,
        seed,
        ..Default::default()
    }
}

/// Generated scenario with capacities.
pub fn scenario(n: usize, seed: u64) -> InterdependentNetwork {
    generate_scenario(&params(n, seed)).expect("default parameters generate")
}

/// Scenario with the power removals for `fraction` already applied.
pub fn damaged(n: usize, seed: u64, fraction: f64) -> (InterdependentNetwork, Removals) {
    let net = scenario(n, seed);
    let removals = select_removals(n, n, fraction, seed, false).expect("valid fraction");
    (net, removals)
}
