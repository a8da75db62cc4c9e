//! Load-shedding control policies.
//!
//! Both policies pick new injections with a linear program that keeps every
//! line within capacity while shedding as little as possible. Generators may
//! only ramp down and loads may only be shed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cascade::{run_interdependent_cascade, run_power_cascade, yield_against};
use crate::error::{Error, Result};
use crate::graph::{EdgeId, NodeId};
use crate::interdependency::{apply_dependency_rules, prune_to_fixed_point, InterdependentNetwork, Removals};
use crate::lp::{LinearProgram, LpSolution, LpStatus, Relation, VarId};
use crate::network::{BusRole, PowerGrid};
use crate::power_flow::{balance_grid, balance_island, shift_factors};

/// Relative margin kept below line capacities and above `p_req` inside the
/// programs, so that rounding in the recovered point cannot trip a line or
/// starve a communication node.
pub const LP_MARGIN: f64 = 1e-6;

/// Shift-factor entries below this are dropped.
const SHIFT_FACTOR_CUTOFF: f64 = 1e-12;

/// How line flows are tied to injections inside the programs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowFormulation {
    /// Flows as explicit linear functions of injections, one row per line
    /// plus one balance row per island.
    #[default]
    ShiftFactors,
    /// Phase angles and flows as variables with node-balance and Ohm's-law
    /// rows; one reference angle per island is fixed to zero.
    PhaseAngles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// New injection per bus; zero for dead buses.
    pub injections: Vec<f64>,
    /// `|P_new − P_old|` per bus.
    pub shed: Vec<f64>,
    /// Total shed, in power units.
    pub objective: f64,
    pub iterations: usize,
}

impl InjectionPlan {
    pub fn apply(&self, grid: &mut PowerGrid) -> Result<()> {
        for bus in grid.graph().alive_nodes().collect::<Vec<_>>() {
            grid.set_injection(bus, self.injections[bus.0])?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PlanResult {
    Optimal(InjectionPlan),
    Infeasible,
}

/// A shedding program built from a grid, with what is needed to read the
/// answer back.
#[derive(Clone, Debug)]
pub struct InjectionLp {
    program: LinearProgram,
    scale: f64,
    old: Vec<f64>,
    injection_vars: Vec<Option<VarId>>,
    islands: Vec<Vec<NodeId>>,
}

impl InjectionLp {
    /// Shedding program on the alive grid alone.
    pub fn new(grid: &PowerGrid, formulation: FlowFormulation) -> Result<Self> {
        let old = grid.injections();
        let scale = grid
            .graph()
            .alive_nodes()
            .fold(0.0_f64, |m, b| m.max(old[b.0].abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let mut program = LinearProgram::new();
        let mut injection_vars = vec![None; grid.bus_count()];
        for bus in grid.graph().alive_nodes() {
            let p = old[bus.0] / scale;
            let (lo, hi, cost, prefix) = match grid.bus(bus).role {
                BusRole::Generator => (0.0, p, -1.0, "pg"),
                BusRole::Load => (p, 0.0, 1.0, "pl"),
                BusRole::Substation => (0.0, 0.0, 0.0, "ps"),
            };
            injection_vars[bus.0] =
                Some(program.add_named_variable(format!("{prefix}{}", bus.0), lo, hi, cost)?);
        }
        let islands = grid.islands();
        let mut lp = Self {
            program,
            scale,
            old,
            injection_vars,
            islands,
        };
        for island in lp.islands.clone() {
            match formulation {
                FlowFormulation::ShiftFactors => lp.add_shift_factor_rows(grid, &island)?,
                FlowFormulation::PhaseAngles => lp.add_phase_angle_rows(grid, &island)?,
            }
        }
        Ok(lp)
    }

    /// Adds communication supply: every alive communication node must draw at
    /// least `p_req` from alive loads, and a load cannot give away more than
    /// it receives.
    pub fn with_comm_supply(net: &InterdependentNetwork, formulation: FlowFormulation) -> Result<Self> {
        let mut lp = Self::new(&net.grid, formulation)?;
        let coupling = &net.coupling;
        let edges = coupling.supply_edges();
        let mut h = vec![None; edges.len()];
        for (k, e) in edges.iter().enumerate() {
            if net.grid.is_bus_alive(e.load_bus) && net.comm.is_alive(e.comm_node) {
                h[k] = Some(lp.program.add_named_variable(
                    format!("h{}_{}", e.load_bus.0, e.comm_node.0),
                    0.0,
                    f64::INFINITY,
                    0.0,
                )?);
            }
        }
        let demand = coupling.p_req() * (1.0 + LP_MARGIN) / lp.scale;
        for comm in net.comm.graph().alive_nodes() {
            let terms = coupling
                .supplies_of(comm)
                .iter()
                .filter_map(|&k| h[k].map(|v| (v, 1.0)))
                .collect();
            lp.program.add_constraint(terms, Relation::Ge, demand)?;
        }
        for bus in net.grid.graph().alive_nodes() {
            let mut terms: Vec<(VarId, f64)> = coupling
                .supplied_by(bus)
                .iter()
                .filter_map(|&k| h[k].map(|v| (v, 1.0)))
                .collect();
            if terms.is_empty() {
                continue;
            }
            terms.push((lp.injection_vars[bus.0].expect("alive bus"), 1.0));
            lp.program.add_constraint(terms, Relation::Le, 0.0)?;
        }
        Ok(lp)
    }

    pub fn program(&self) -> &LinearProgram {
        &self.program
    }

    fn capacity(&self, grid: &PowerGrid, line: EdgeId) -> Result<f64> {
        let cap = grid
            .line(line)
            .capacity
            .ok_or(Error::MissingCapacity(line.0))?;
        Ok(cap * (1.0 - LP_MARGIN) / self.scale)
    }

    fn add_shift_factor_rows(&mut self, grid: &PowerGrid, island: &[NodeId]) -> Result<()> {
        let balance = island
            .iter()
            .map(|b| (self.injection_vars[b.0].expect("alive bus"), 1.0))
            .collect();
        self.program.add_constraint(balance, Relation::Eq, 0.0)?;
        if island.len() < 2 {
            return Ok(());
        }
        let h = shift_factors(grid, island)?;
        for (l, &line) in h.lines.iter().enumerate() {
            let cap = self.capacity(grid, line)?;
            let f = self
                .program
                .add_named_variable(format!("f{}", line.0), -cap, cap, 0.0)?;
            let mut terms = vec![(f, 1.0)];
            for (c, bus) in h.buses.iter().enumerate() {
                let coef = h.matrix[(l, c)];
                if coef.abs() > SHIFT_FACTOR_CUTOFF {
                    terms.push((self.injection_vars[bus.0].expect("alive bus"), -coef));
                }
            }
            self.program.add_constraint(terms, Relation::Eq, 0.0)?;
        }
        Ok(())
    }

    fn add_phase_angle_rows(&mut self, grid: &PowerGrid, island: &[NodeId]) -> Result<()> {
        let reference = island[0];
        let mut theta = Vec::with_capacity(island.len());
        for &bus in island {
            let (lo, hi) = if bus == reference {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            theta.push((
                bus,
                self.program
                    .add_named_variable(format!("t{}", bus.0), lo, hi, 0.0)?,
            ));
        }
        let theta_of = |bus: NodeId| {
            theta
                .iter()
                .find(|(b, _)| *b == bus)
                .map(|&(_, v)| v)
                .expect("bus in island")
        };
        let mut balance: Vec<Vec<(VarId, f64)>> = island
            .iter()
            .map(|b| vec![(self.injection_vars[b.0].expect("alive bus"), -1.0)])
            .collect();
        let position = |bus: NodeId| island.binary_search(&bus).expect("bus in island");
        let lines: Vec<EdgeId> = {
            let mut v: Vec<EdgeId> = island
                .iter()
                .flat_map(|&b| grid.graph().neighbors(b).map(|(_, e)| e))
                .collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for line in lines {
            let cap = self.capacity(grid, line)?;
            let (from, to) = grid.endpoints(line);
            let f = self
                .program
                .add_named_variable(format!("f{}", line.0), -cap, cap, 0.0)?;
            let x = grid.line(line).reactance;
            self.program.add_constraint(
                vec![(f, x), (theta_of(from), -1.0), (theta_of(to), 1.0)],
                Relation::Eq,
                0.0,
            )?;
            balance[position(from)].push((f, 1.0));
            balance[position(to)].push((f, -1.0));
        }
        for terms in balance {
            self.program.add_constraint(terms, Relation::Eq, 0.0)?;
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<PlanResult> {
        let solution = self.program.solve();
        match solution.status {
            LpStatus::Optimal => Ok(PlanResult::Optimal(self.decode(&solution))),
            LpStatus::Infeasible => Ok(PlanResult::Infeasible),
            status => Err(Error::Solver(status)),
        }
    }

    /// Reads injections back in power units, snaps values within rounding of
    /// their bounds, and rebalances each island exactly.
    fn decode(&self, solution: &LpSolution) -> InjectionPlan {
        let snap = 1e-9 * self.scale;
        let mut injections = vec![0.0; self.old.len()];
        for (bus, var) in self.injection_vars.iter().enumerate() {
            let Some(var) = *var else { continue };
            let old = self.old[bus];
            let (lo, hi) = (old.min(0.0), old.max(0.0));
            let mut p = (solution.value(var) * self.scale).clamp(lo, hi);
            if (p - old).abs() <= snap {
                p = old;
            }
            if p.abs() <= snap {
                p = 0.0;
            }
            injections[bus] = p;
        }
        for island in &self.islands {
            let before: Vec<f64> = island.iter().map(|b| injections[b.0]).collect();
            let (after, _) = balance_island(&before);
            for (b, p) in island.iter().zip(after) {
                injections[b.0] = p;
            }
        }
        let shed: Vec<f64> = injections
            .iter()
            .zip(&self.old)
            .enumerate()
            .map(|(b, (new, old))| {
                if self.injection_vars[b].is_some() {
                    (new - old).abs()
                } else {
                    0.0
                }
            })
            .collect();
        InjectionPlan {
            objective: shed.iter().sum(),
            injections,
            shed,
            iterations: solution.iterations,
        }
    }
}

/// Minimum-shed injections that keep every alive line within capacity.
pub fn simple_mitigation_lp(grid: &PowerGrid, formulation: FlowFormulation) -> Result<PlanResult> {
    InjectionLp::new(grid, formulation)?.solve()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Uncontrolled interdependent cascade.
    None,
    /// Uncontrolled overload cascade in the grid alone.
    PowerOnly,
    /// Shedding program re-solved after every round of dependency failures.
    Simple,
    /// Connectivity pruning, then one shedding program that also powers the
    /// surviving communication nodes.
    LoadControl,
    /// Shedding program on the grid alone.
    IsolatedBound,
    /// Connectivity pruning only, without flows.
    ConnectivityOnly,
}

impl Policy {
    pub const ALL: [Policy; 6] = [
        Policy::None,
        Policy::PowerOnly,
        Policy::Simple,
        Policy::LoadControl,
        Policy::IsolatedBound,
        Policy::ConnectivityOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::None => "none",
            Policy::PowerOnly => "power_only",
            Policy::Simple => "simple",
            Policy::LoadControl => "load_control",
            Policy::IsolatedBound => "isolated_bound",
            Policy::ConnectivityOnly => "connectivity_only",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown policy `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub power_alive: Vec<bool>,
    pub comm_alive: Vec<bool>,
    pub injections: Vec<f64>,
    pub yield_value: f64,
    pub feasible: bool,
    /// Largest alive grid component over the buses left after the initial
    /// removals.
    pub lcc_ratio: f64,
    /// Loop passes: shedding rounds, macro-rounds or pruning passes.
    pub iterations: usize,
}

impl PolicyOutcome {
    fn from_state(
        policy: Policy,
        net: &InterdependentNetwork,
        baseline_load: f64,
        remaining: usize,
        feasible: bool,
        iterations: usize,
    ) -> Result<Self> {
        let yield_value = if feasible {
            yield_against(&net.grid, baseline_load)?
        } else {
            0.0
        };
        Ok(Self {
            policy,
            power_alive: net.grid.graph().node_alive_mask().to_vec(),
            comm_alive: net.comm.alive_mask().to_vec(),
            injections: net.grid.injections(),
            yield_value,
            feasible,
            lcc_ratio: net.grid.largest_component_ratio(remaining),
            iterations,
        })
    }
}

fn prepared(net: &InterdependentNetwork, removals: &Removals) -> Result<(InterdependentNetwork, f64, usize)> {
    let baseline_load = net.grid.total_load();
    if !(baseline_load > 0.0) {
        return Err(Error::ZeroLoad);
    }
    let mut state = net.clone();
    state.apply_removals(removals)?;
    let remaining = state.grid.graph().alive_node_count();
    Ok((state, baseline_load, remaining))
}

/// Shedding program applied after every round of dependency failures until
/// nothing else fails.
pub fn iterative_simple_policy(
    net: &InterdependentNetwork,
    removals: &Removals,
    formulation: FlowFormulation,
) -> Result<PolicyOutcome> {
    let (mut state, baseline, remaining) = prepared(net, removals)?;
    let bound = state.grid.bus_count() + state.comm.node_count() + 1;
    let mut iterations = 0;
    for _ in 0..bound {
        iterations += 1;
        match simple_mitigation_lp(&state.grid, formulation)? {
            PlanResult::Optimal(plan) => plan.apply(&mut state.grid)?,
            PlanResult::Infeasible => {
                return PolicyOutcome::from_state(Policy::Simple, &state, baseline, remaining, false, iterations)
            }
        }
        if apply_dependency_rules(&mut state).is_empty() {
            break;
        }
    }
    PolicyOutcome::from_state(Policy::Simple, &state, baseline, remaining, true, iterations)
}

/// Connectivity pruning followed by one shedding program that keeps every
/// surviving communication node powered.
pub fn load_control_policy(
    net: &InterdependentNetwork,
    removals: &Removals,
    formulation: FlowFormulation,
) -> Result<PolicyOutcome> {
    let (mut state, baseline, remaining) = prepared(net, removals)?;
    let iterations = prune_to_fixed_point(&mut state);
    let feasible = match InjectionLp::with_comm_supply(&state, formulation)?.solve()? {
        PlanResult::Optimal(plan) => {
            plan.apply(&mut state.grid)?;
            true
        }
        PlanResult::Infeasible => false,
    };
    PolicyOutcome::from_state(Policy::LoadControl, &state, baseline, remaining, feasible, iterations)
}

/// Shedding program on the grid alone after the power removals.
pub fn isolated_grid_upper_bound(
    net: &InterdependentNetwork,
    removals: &Removals,
    formulation: FlowFormulation,
) -> Result<PolicyOutcome> {
    let power_only = Removals::power_only(removals.power.clone());
    let (mut state, baseline, remaining) = prepared(net, &power_only)?;
    let feasible = match simple_mitigation_lp(&state.grid, formulation)? {
        PlanResult::Optimal(plan) => {
            plan.apply(&mut state.grid)?;
            true
        }
        PlanResult::Infeasible => false,
    };
    PolicyOutcome::from_state(Policy::IsolatedBound, &state, baseline, remaining, feasible, 1)
}

pub fn run_policy(
    net: &InterdependentNetwork,
    removals: &Removals,
    policy: Policy,
    formulation: FlowFormulation,
) -> Result<PolicyOutcome> {
    match policy {
        Policy::Simple => iterative_simple_policy(net, removals, formulation),
        Policy::LoadControl => load_control_policy(net, removals, formulation),
        Policy::IsolatedBound => isolated_grid_upper_bound(net, removals, formulation),
        Policy::None => {
            let (mut state, baseline, remaining) = prepared(net, removals)?;
            let trace = run_interdependent_cascade(&mut state)?;
            PolicyOutcome::from_state(policy, &state, baseline, remaining, true, trace.macro_rounds())
        }
        Policy::PowerOnly => {
            let power_only = Removals::power_only(removals.power.clone());
            let (mut state, baseline, remaining) = prepared(net, &power_only)?;
            let trace = run_power_cascade(&mut state.grid)?;
            PolicyOutcome::from_state(policy, &state, baseline, remaining, true, trace.rounds.len())
        }
        Policy::ConnectivityOnly => {
            let (mut state, baseline, remaining) = prepared(net, removals)?;
            let iterations = prune_to_fixed_point(&mut state);
            balance_grid(&mut state.grid);
            PolicyOutcome::from_state(policy, &state, baseline, remaining, true, iterations)
        }
    }
}
