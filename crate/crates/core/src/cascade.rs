//! Overload cascades in the grid, alone and coupled to the communication
//! network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeId, NodeId};
use crate::interdependency::{apply_dependency_rules, InterdependentNetwork};
use crate::network::{BusRole, PowerGrid};
use crate::power_flow::{balance_grid, solve_grid_flow, BalanceReport, FlowSolution};

/// Relative slack on the overload test.
pub const TRIP_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRule {
    pub factor_of_safety: f64,
    /// Lines with tiny base flow get at least this fraction of the largest
    /// base flow as capacity.
    pub floor_fraction: f64,
}

impl Default for CapacityRule {
    fn default() -> Self {
        Self {
            factor_of_safety: 1.2,
            floor_fraction: 1e-6,
        }
    }
}

impl CapacityRule {
    pub fn with_factor(factor_of_safety: f64) -> Self {
        Self {
            factor_of_safety,
            ..Self::default()
        }
    }
}

/// Sets every line capacity to `factor_of_safety · |base flow|`, raised to
/// the floor where needed. Returns the base-case flows.
pub fn assign_capacities(grid: &mut PowerGrid, rule: &CapacityRule) -> Result<FlowSolution> {
    if !(rule.factor_of_safety.is_finite() && rule.factor_of_safety > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "factor of safety must be positive, got {}",
            rule.factor_of_safety
        )));
    }
    if !(rule.floor_fraction.is_finite() && rule.floor_fraction >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "capacity floor must be >= 0, got {}",
            rule.floor_fraction
        )));
    }
    let base = solve_grid_flow(grid)?;
    let max_flow = base.flows.iter().fold(0.0_f64, |m, f| m.max(f.abs()));
    let floor = rule.floor_fraction * max_flow;
    for line in 0..grid.line_count() {
        let cap = (rule.factor_of_safety * base.flows[line].abs()).max(floor);
        grid.set_capacity(EdgeId(line), cap);
    }
    Ok(base)
}

/// Alive lines whose flow exceeds capacity.
pub fn overloaded_lines(grid: &PowerGrid, flows: &FlowSolution) -> Result<Vec<EdgeId>> {
    let mut out = Vec::new();
    for line in grid.graph().alive_edges() {
        let cap = grid
            .line(line)
            .capacity
            .ok_or(Error::MissingCapacity(line.0))?;
        if flows.flow(line).abs() > cap * (1.0 + TRIP_SLACK) {
            out.push(line);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeRound {
    pub macro_round: usize,
    pub balance: Vec<BalanceReport>,
    pub flows: FlowSolution,
    pub tripped_lines: Vec<EdgeId>,
    pub failed_power: Vec<NodeId>,
    pub failed_comm: Vec<NodeId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub rounds: Vec<CascadeRound>,
    pub terminated: bool,
    pub power_alive: Vec<bool>,
    pub line_alive: Vec<bool>,
    pub comm_alive: Vec<bool>,
}

impl CascadeTrace {
    pub fn tripped_lines(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.rounds.iter().flat_map(|r| r.tripped_lines.iter().copied())
    }

    pub fn macro_rounds(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.macro_round + 1)
    }

    /// One JSON object per round.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for round in &self.rounds {
            out.push_str(&serde_json::to_string(round).expect("rounds serialize"));
            out.push('\n');
        }
        out
    }
}

/// Balances, solves and trips overloaded lines until nothing trips.
pub fn run_power_cascade(grid: &mut PowerGrid) -> Result<CascadeTrace> {
    let mut trace = CascadeTrace::default();
    power_rounds(grid, 0, &mut trace)?;
    trace.terminated = true;
    trace.power_alive = grid.graph().node_alive_mask().to_vec();
    trace.line_alive = grid.graph().edge_alive_mask();
    Ok(trace)
}

fn power_rounds(grid: &mut PowerGrid, macro_round: usize, trace: &mut CascadeTrace) -> Result<()> {
    // Each tripping round kills at least one line, so this bounds the loop.
    for _ in 0..=grid.line_count() {
        let round = trace.rounds.len();
        let balance = balance_grid(grid);
        let flows = solve_grid_flow(grid).map_err(|e| Error::Cascade {
            round,
            source: Box::new(e),
        })?;
        let tripped = overloaded_lines(grid, &flows)?;
        for &line in &tripped {
            grid.trip_line(line);
        }
        let quiet = tripped.is_empty();
        trace.rounds.push(CascadeRound {
            macro_round,
            balance,
            flows,
            tripped_lines: tripped,
            failed_power: Vec::new(),
            failed_comm: Vec::new(),
        });
        if quiet {
            return Ok(());
        }
    }
    unreachable!("a round without trips ends the loop before lines run out")
}

/// Uncontrolled cascade across both networks. Each macro-round runs the
/// power cascade to quiescence, then fails communication nodes short of
/// power, then those cut off from control centers, then power nodes left
/// without control. Stops when a macro-round changes nothing.
pub fn run_interdependent_cascade(net: &mut InterdependentNetwork) -> Result<CascadeTrace> {
    let mut trace = CascadeTrace::default();
    let bound = net.grid.bus_count() + net.comm.node_count() + 1;
    for macro_round in 0..bound {
        power_rounds(&mut net.grid, macro_round, &mut trace)?;
        let failures = apply_dependency_rules(net);
        let last = trace.rounds.last_mut().expect("power rounds push at least one round");
        last.failed_comm = failures.failed_comm();
        last.failed_power = failures.unsupported_power.clone();
        if failures.is_empty() {
            trace.terminated = true;
            break;
        }
    }
    trace.power_alive = net.grid.graph().node_alive_mask().to_vec();
    trace.line_alive = net.grid.graph().edge_alive_mask();
    trace.comm_alive = net.comm.alive_mask().to_vec();
    Ok(trace)
}

/// Load served in islands that still hold generation.
pub fn served_load(grid: &PowerGrid) -> f64 {
    let components = grid.components();
    let mut fed = vec![false; grid.bus_count()];
    for (b, bus) in grid.graph().nodes() {
        if bus.role == BusRole::Generator && bus.injection > 0.0 {
            if let Some(label) = components.label(b) {
                fed[label.0] = true;
            }
        }
    }
    // Summing in bus order makes an untouched grid reproduce its total load
    // exactly.
    grid.graph()
        .nodes()
        .filter(|(b, bus)| {
            bus.role == BusRole::Load && components.label(*b).is_some_and(|l| fed[l.0])
        })
        .map(|(_, bus)| -bus.injection)
        .sum()
}

/// Served load over the load of the intact `baseline`.
pub fn yield_of(final_grid: &PowerGrid, baseline: &PowerGrid) -> Result<f64> {
    yield_against(final_grid, baseline.total_load())
}

pub fn yield_against(final_grid: &PowerGrid, baseline_load: f64) -> Result<f64> {
    if !(baseline_load > 0.0) {
        return Err(Error::ZeroLoad);
    }
    // Adding zero turns -0.0 into 0.0.
    Ok((served_load(final_grid) / baseline_load).clamp(0.0, 1.0) + 0.0)
}
