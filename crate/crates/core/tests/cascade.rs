mod support;

use intergrid_core::cascade::{
    assign_capacities, overloaded_lines, run_interdependent_cascade, run_power_cascade, yield_of,
    CapacityRule,
};
use intergrid_core::interdependency::{ControlEdge, Coupling, SupplyEdge};
use intergrid_core::network::{BusRole, CommRole};
use intergrid_core::power_flow::solve_grid_flow;
use intergrid_core::scenario::{generate_scenario, select_removals, ScenarioParams};
use intergrid_core::{CommNetwork, EdgeId, InterdependentNetwork, NodeId, PowerGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::random_grid;

/// G0 and L1 on one side of the bridge L1–L2, loads L2 and L3 on the other.
fn bridge() -> (PowerGrid, EdgeId) {
    let mut g = PowerGrid::new();
    let g0 = g.add_bus(BusRole::Generator, 10.0).unwrap();
    let l1 = g.add_bus(BusRole::Load, -4.0).unwrap();
    let l2 = g.add_bus(BusRole::Load, -3.0).unwrap();
    let l3 = g.add_bus(BusRole::Load, -3.0).unwrap();
    g.add_line(g0, l1, 1.0).unwrap();
    let bridge = g.add_line(l1, l2, 1.0).unwrap();
    g.add_line(l2, l3, 1.0).unwrap();
    (g, bridge)
}

#[test]
fn losing_the_bridge_strands_the_far_loads() {
    let (mut g, bridge) = bridge();
    let baseline = g.clone();
    let base = assign_capacities(&mut g, &CapacityRule::default()).unwrap();
    assert!((base.flow(EdgeId(0)) - 10.0).abs() < 1e-9);
    g.trip_line(bridge);
    let trace = run_power_cascade(&mut g).unwrap();
    // The generator side keeps 4 units of load, the far island none.
    assert_eq!(g.injections(), vec![4.0, -4.0, 0.0, 0.0]);
    // 4 units on a line rated 12: nothing else trips.
    assert_eq!(trace.rounds.len(), 1);
    let flows = solve_grid_flow(&g).unwrap();
    assert!((flows.flow(EdgeId(0)) - 4.0).abs() < 1e-12);
    assert_eq!(flows.flow(EdgeId(2)), 0.0);
    assert!((yield_of(&g, &baseline).unwrap() - 0.4).abs() < 1e-12);
}

/// One generator and one load with a communication node each; the load
/// powers both communication nodes and each controls its own power node.
fn small_interdependent() -> InterdependentNetwork {
    let mut g = PowerGrid::new();
    let a = g.add_bus(BusRole::Generator, 10.0).unwrap();
    let b = g.add_bus(BusRole::Load, -10.0).unwrap();
    let line = g.add_line(a, b, 1.0).unwrap();
    g.set_capacity(line, 12.0);
    let mut c = CommNetwork::new();
    let cc = c.add_node(CommRole::ControlCenter);
    let r = c.add_node(CommRole::Router);
    c.add_link(cc, r).unwrap();
    let supply = vec![
        SupplyEdge {
            load_bus: b,
            comm_node: cc,
        },
        SupplyEdge {
            load_bus: b,
            comm_node: r,
        },
    ];
    let control = vec![
        ControlEdge {
            comm_node: cc,
            power_bus: a,
        },
        ControlEdge {
            comm_node: r,
            power_bus: b,
        },
    ];
    let coupling = Coupling::new(2, 2, supply, control, 1.0).unwrap();
    InterdependentNetwork::new(g, c, coupling).unwrap()
}

#[test]
fn interdependent_cascade_without_failures_is_quiet() {
    let mut net = small_interdependent();
    let baseline = net.grid.clone();
    let trace = run_interdependent_cascade(&mut net).unwrap();
    assert!(trace.terminated);
    assert_eq!(trace.macro_rounds(), 1);
    assert_eq!(yield_of(&net.grid, &baseline).unwrap(), 1.0);
}

#[test]
fn losing_the_control_center_collapses_both_networks() {
    let mut net = small_interdependent();
    let baseline = net.grid.clone();
    net.comm.fail_node(NodeId(0));
    let trace = run_interdependent_cascade(&mut net).unwrap();
    assert!(trace.comm_alive.iter().all(|a| !a));
    assert!(trace.power_alive.iter().all(|a| !a));
    assert_eq!(yield_of(&net.grid, &baseline).unwrap(), 0.0);
}

#[test]
fn short_supply_fails_the_router_then_its_load() {
    // Load 1.5 covers the control center (1.0) but not the router too.
    let mut net = small_interdependent();
    net.grid.set_injection(NodeId(0), 1.5).unwrap();
    net.grid.set_injection(NodeId(1), -1.5).unwrap();
    let trace = run_interdependent_cascade(&mut net).unwrap();
    assert_eq!(trace.rounds[0].failed_comm, vec![NodeId(1)]);
    assert_eq!(trace.rounds[0].failed_power, vec![NodeId(1)]);
    // The load is gone, so the control center loses its supply next.
    assert!(trace.comm_alive.iter().all(|a| !a));
}

#[test]
fn generated_scenarios_start_quiescent() {
    for seed in 0..5 {
        let params = ScenarioParams {
            seed,
            ..Default::default()
        };
        let mut net = generate_scenario(&params).unwrap();
        let baseline = net.grid.clone();
        let trace = run_interdependent_cascade(&mut net).unwrap();
        assert_eq!(trace.rounds.len(), 1, "seed {seed}");
        assert!(trace.tripped_lines().next().is_none());
        assert!(trace.power_alive.iter().all(|&a| a));
        assert!(trace.comm_alive.iter().all(|&a| a));
        assert_eq!(yield_of(&net.grid, &baseline).unwrap(), 1.0);
    }
}

#[test]
fn interdependent_cascade_invariants_and_determinism() {
    for seed in 0..6 {
        let params = ScenarioParams {
            seed,
            n_power: 60,
            n_comm: 60,
            ..Default::default()
        };
        let net = generate_scenario(&params).unwrap();
        for fraction in [0.02, 0.05, 0.1] {
            let removals = select_removals(60, 60, fraction, seed, seed % 2 == 0).unwrap();
            let run = || {
                let mut state = net.clone();
                state.apply_removals(&removals).unwrap();
                let trace = run_interdependent_cascade(&mut state).unwrap();
                (state, trace)
            };
            let (state, trace) = run();
            let (_, again) = run();
            assert_eq!(serde_json::to_string(&trace).unwrap(), serde_json::to_string(&again).unwrap());
            assert!(trace.terminated);
            assert!(trace.macro_rounds() <= 121);
            let mut seen = std::collections::BTreeSet::new();
            for l in trace.tripped_lines() {
                assert!(seen.insert(l), "line {l} tripped twice");
            }
            assert!(trace.rounds.last().unwrap().tripped_lines.is_empty());
            let flows = solve_grid_flow(&state.grid).unwrap();
            assert!(overloaded_lines(&state.grid, &flows).unwrap().is_empty());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn power_cascade_shrinks_and_ends_feasible(seed in any::<u64>(), n in 3usize..40, extra in 0usize..40, cut in any::<prop::sample::Index>()) {
        let mut g = random_grid(&mut ChaCha8Rng::seed_from_u64(seed), n, extra);
        assign_capacities(&mut g, &CapacityRule::default()).unwrap();
        let quiet = run_power_cascade(&mut g.clone()).unwrap();
        prop_assert_eq!(quiet.rounds.len(), 1);
        let line = EdgeId(cut.index(g.line_count()));
        g.trip_line(line);
        let trace = run_power_cascade(&mut g).unwrap();
        prop_assert!(trace.rounds.len() <= g.line_count() + 1);
        let mut alive = g.line_count();
        for r in &trace.rounds {
            prop_assert!(r.tripped_lines.iter().all(|&l| l != line));
            alive -= r.tripped_lines.len();
        }
        prop_assert_eq!(alive, g.graph().alive_edges().count() + 1);
        let flows = solve_grid_flow(&g).unwrap();
        prop_assert!(overloaded_lines(&g, &flows).unwrap().is_empty());
    }
}
