//! Coupling between the grid and the communication network.
//!
//! Supply edges carry power from a transmission load to a communication
//! node; a node works only while it receives `p_req`. Control edges carry
//! monitoring and control from a communication node to a power node; a power
//! node with no working controller fails.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::network::{BusRole, CommNetwork, PowerGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SupplyEdge {
    pub load_bus: NodeId,
    pub comm_node: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ControlEdge {
    pub comm_node: NodeId,
    pub power_bus: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    supply: Vec<SupplyEdge>,
    control: Vec<ControlEdge>,
    p_req: f64,
    supply_by_comm: Vec<Vec<usize>>,
    supply_by_load: Vec<Vec<usize>>,
    control_by_power: Vec<Vec<usize>>,
}

impl Coupling {
    pub fn new(
        n_power: usize,
        n_comm: usize,
        supply: Vec<SupplyEdge>,
        control: Vec<ControlEdge>,
        p_req: f64,
    ) -> Result<Self> {
        if !(p_req.is_finite() && p_req >= 0.0) {
            return Err(Error::InvalidCoupling(format!("p_req must be >= 0, got {p_req}")));
        }
        let mut supply_by_comm = vec![Vec::new(); n_comm];
        let mut supply_by_load = vec![Vec::new(); n_power];
        let mut control_by_power = vec![Vec::new(); n_power];
        for (k, e) in supply.iter().enumerate() {
            if e.load_bus.0 >= n_power || e.comm_node.0 >= n_comm {
                return Err(Error::InvalidCoupling(format!(
                    "supply edge {} -> {} is out of range",
                    e.load_bus, e.comm_node
                )));
            }
            if supply_by_comm[e.comm_node.0]
                .iter()
                .any(|&o: &usize| supply[o].load_bus == e.load_bus)
            {
                return Err(Error::InvalidCoupling(format!(
                    "duplicate supply edge {} -> {}",
                    e.load_bus, e.comm_node
                )));
            }
            supply_by_comm[e.comm_node.0].push(k);
            supply_by_load[e.load_bus.0].push(k);
        }
        for (k, e) in control.iter().enumerate() {
            if e.power_bus.0 >= n_power || e.comm_node.0 >= n_comm {
                return Err(Error::InvalidCoupling(format!(
                    "control edge {} -> {} is out of range",
                    e.comm_node, e.power_bus
                )));
            }
            if control_by_power[e.power_bus.0]
                .iter()
                .any(|&o: &usize| control[o].comm_node == e.comm_node)
            {
                return Err(Error::InvalidCoupling(format!(
                    "duplicate control edge {} -> {}",
                    e.comm_node, e.power_bus
                )));
            }
            control_by_power[e.power_bus.0].push(k);
        }
        Ok(Self {
            supply,
            control,
            p_req,
            supply_by_comm,
            supply_by_load,
            control_by_power,
        })
    }

    pub fn supply_edges(&self) -> &[SupplyEdge] {
        &self.supply
    }

    pub fn control_edges(&self) -> &[ControlEdge] {
        &self.control
    }

    pub fn p_req(&self) -> f64 {
        self.p_req
    }

    /// Indices into `supply_edges()` feeding a communication node.
    pub fn supplies_of(&self, comm: NodeId) -> &[usize] {
        &self.supply_by_comm[comm.0]
    }

    /// Indices into `supply_edges()` leaving a load bus.
    pub fn supplied_by(&self, load: NodeId) -> &[usize] {
        &self.supply_by_load[load.0]
    }

    /// Indices into `control_edges()` reaching a power node.
    pub fn controllers_of(&self, bus: NodeId) -> &[usize] {
        &self.control_by_power[bus.0]
    }
}

/// Initial failures of a scenario.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removals {
    pub power: Vec<NodeId>,
    pub comm: Vec<NodeId>,
}

impl Removals {
    pub fn power_only(power: Vec<NodeId>) -> Self {
        Self {
            power,
            comm: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InterdependentNetwork {
    pub grid: PowerGrid,
    pub comm: CommNetwork,
    pub coupling: Coupling,
}

impl InterdependentNetwork {
    /// Checks that the coupling fits both networks and that supply edges
    /// leave load buses only.
    pub fn new(grid: PowerGrid, comm: CommNetwork, coupling: Coupling) -> Result<Self> {
        if coupling.supply_by_load.len() != grid.bus_count()
            || coupling.supply_by_comm.len() != comm.node_count()
        {
            return Err(Error::InvalidCoupling(
                "coupling was built for different network sizes".into(),
            ));
        }
        for e in coupling.supply_edges() {
            if grid.bus(e.load_bus).role != BusRole::Load {
                return Err(Error::InvalidCoupling(format!(
                    "supply edge leaves bus {} which is not a load",
                    e.load_bus
                )));
            }
        }
        Ok(Self {
            grid,
            comm,
            coupling,
        })
    }

    pub fn apply_removals(&mut self, removals: &Removals) -> Result<()> {
        for &b in &removals.power {
            if b.0 >= self.grid.bus_count() {
                return Err(Error::UnknownNode(b.0));
            }
            self.grid.fail_bus(b);
        }
        for &c in &removals.comm {
            if c.0 >= self.comm.node_count() {
                return Err(Error::UnknownNode(c.0));
            }
            self.comm.fail_node(c);
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    /// Power delivered to each communication node.
    pub delivered: Vec<f64>,
    /// Power carried by each supply edge.
    pub supply_flow: Vec<f64>,
    /// Communication nodes receiving at least `p_req`, ascending.
    pub powered: Vec<NodeId>,
}

/// Distributes served load to communication nodes.
///
/// Nodes are admitted in ascending id order; a node is admitted when an
/// augmenting-path search can route `p_req` to it without taking power away
/// from nodes admitted earlier (flows may be rerouted). A node that cannot be
/// fully served receives nothing. The admitted set is maximal: no other
/// alive node can be added.
pub fn allocate_comm_power(
    served_loads: &[f64],
    coupling: &Coupling,
    alive_comm: &[bool],
) -> AllocationResult {
    let edges = coupling.supply_edges();
    let p_req = coupling.p_req();
    let n_comm = alive_comm.len();
    let budget_scale = served_loads.iter().fold(p_req, |m, &s| m.max(s));
    let accept_slack = 1e-9 * budget_scale.max(f64::MIN_POSITIVE);
    let flow_eps = 1e-13 * budget_scale.max(f64::MIN_POSITIVE);

    let mut flow = vec![0.0; edges.len()];
    let mut used = vec![0.0; served_loads.len()];
    let mut delivered = vec![0.0; n_comm];
    let mut powered = Vec::new();

    for j in 0..n_comm {
        if !alive_comm[j] {
            continue;
        }
        if p_req == 0.0 {
            powered.push(NodeId(j));
            continue;
        }
        let saved_flow = flow.clone();
        let saved_used = used.clone();
        let mut pushed = 0.0;
        while p_req - pushed > flow_eps {
            let Some(path) = augmenting_path(
                NodeId(j),
                served_loads,
                &used,
                &flow,
                coupling,
                alive_comm,
                flow_eps,
            ) else {
                break;
            };
            let amount = path.bottleneck.min(p_req - pushed);
            used[path.start.0] += amount;
            for &(edge, forward) in &path.edges {
                if forward {
                    flow[edge] += amount;
                } else {
                    flow[edge] -= amount;
                }
            }
            pushed += amount;
        }
        if pushed >= p_req - accept_slack {
            delivered[j] = pushed;
            powered.push(NodeId(j));
        } else {
            flow = saved_flow;
            used = saved_used;
        }
    }
    AllocationResult {
        delivered,
        supply_flow: flow,
        powered,
    }
}

struct AugmentingPath {
    start: NodeId,
    /// Supply edges along the path; `true` when traversed load → comm.
    edges: Vec<(usize, bool)>,
    bottleneck: f64,
}

/// Breadth-first search from loads with spare budget to `target`, moving
/// load → comm along any supply edge and comm → load against an edge that
/// already carries flow.
fn augmenting_path(
    target: NodeId,
    served: &[f64],
    used: &[f64],
    flow: &[f64],
    coupling: &Coupling,
    alive_comm: &[bool],
    eps: f64,
) -> Option<AugmentingPath> {
    #[derive(Clone, Copy)]
    enum Via {
        Unseen,
        Source,
        Edge(usize),
    }
    let edges = coupling.supply_edges();
    let mut load_via = vec![Via::Unseen; served.len()];
    let mut comm_via = vec![Via::Unseen; alive_comm.len()];
    let mut queue = VecDeque::new();
    for (i, (&s, &u)) in served.iter().zip(used).enumerate() {
        if s - u > eps && !coupling.supplied_by(NodeId(i)).is_empty() {
            load_via[i] = Via::Source;
            queue.push_back((true, i));
        }
    }
    let mut reached = false;
    while let Some((is_load, v)) = queue.pop_front() {
        if is_load {
            for &k in coupling.supplied_by(NodeId(v)) {
                let c = edges[k].comm_node.0;
                if alive_comm[c] && matches!(comm_via[c], Via::Unseen) {
                    comm_via[c] = Via::Edge(k);
                    if c == target.0 {
                        reached = true;
                        break;
                    }
                    queue.push_back((false, c));
                }
            }
            if reached {
                break;
            }
        } else {
            for &k in coupling.supplies_of(NodeId(v)) {
                let l = edges[k].load_bus.0;
                if flow[k] > eps && matches!(load_via[l], Via::Unseen) {
                    load_via[l] = Via::Edge(k);
                    queue.push_back((true, l));
                }
            }
        }
    }
    if !reached {
        return None;
    }
    let mut path = Vec::new();
    let mut bottleneck = f64::INFINITY;
    let mut comm = target.0;
    loop {
        let Via::Edge(k) = comm_via[comm] else {
            unreachable!("comm nodes are entered through an edge")
        };
        path.push((k, true));
        let load = edges[k].load_bus.0;
        match load_via[load] {
            Via::Source => {
                bottleneck = bottleneck.min(served[load] - used[load]);
                path.reverse();
                return Some(AugmentingPath {
                    start: NodeId(load),
                    edges: path,
                    bottleneck,
                });
            }
            Via::Edge(back) => {
                bottleneck = bottleneck.min(flow[back]);
                path.push((back, false));
                comm = edges[back].comm_node.0;
            }
            Via::Unseen => unreachable!("path loads were visited"),
        }
    }
}

/// Alive power nodes whose controllers are all dead (or that have none).
pub fn unsupported_power_nodes(
    alive_power: &[bool],
    alive_comm: &[bool],
    coupling: &Coupling,
) -> Vec<NodeId> {
    let control = coupling.control_edges();
    (0..alive_power.len())
        .filter(|&i| alive_power[i])
        .filter(|&i| {
            !coupling
                .controllers_of(NodeId(i))
                .iter()
                .any(|&k| alive_comm[control[k].comm_node.0])
        })
        .map(NodeId)
        .collect()
}

/// Failures caused by one pass of the dependency rules.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyFailures {
    pub unpowered_comm: Vec<NodeId>,
    pub disconnected_comm: Vec<NodeId>,
    pub unsupported_power: Vec<NodeId>,
}

impl DependencyFailures {
    pub fn is_empty(&self) -> bool {
        self.unpowered_comm.is_empty()
            && self.disconnected_comm.is_empty()
            && self.unsupported_power.is_empty()
    }

    pub fn failed_comm(&self) -> Vec<NodeId> {
        let mut all: Vec<NodeId> = self
            .unpowered_comm
            .iter()
            .chain(&self.disconnected_comm)
            .copied()
            .collect();
        all.sort_unstable();
        all
    }
}

/// Applies, in order: communication nodes short of power fail, nodes cut off
/// from every control center fail, power nodes left without a working
/// controller fail.
pub fn apply_dependency_rules(net: &mut InterdependentNetwork) -> DependencyFailures {
    let served = net.grid.served_loads();
    let alloc = allocate_comm_power(&served, &net.coupling, net.comm.alive_mask());
    let mut powered = vec![false; net.comm.node_count()];
    for c in &alloc.powered {
        powered[c.0] = true;
    }
    let unpowered_comm: Vec<NodeId> = net
        .comm
        .graph()
        .alive_nodes()
        .filter(|c| !powered[c.0])
        .collect();
    for &c in &unpowered_comm {
        net.comm.fail_node(c);
    }
    let disconnected_comm = net.comm.disconnected_from_control();
    for &c in &disconnected_comm {
        net.comm.fail_node(c);
    }
    let unsupported_power = unsupported_power_nodes(
        net.grid.graph().node_alive_mask(),
        net.comm.alive_mask(),
        &net.coupling,
    );
    for &b in &unsupported_power {
        net.grid.fail_bus(b);
    }
    DependencyFailures {
        unpowered_comm,
        disconnected_comm,
        unsupported_power,
    }
}

/// Nodes removed by the connectivity cascade beyond the initial removals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseOneResult {
    pub removed_power: Vec<NodeId>,
    pub removed_comm: Vec<NodeId>,
    pub iterations: usize,
}

/// Connectivity cascade ignoring power flows.
///
/// Repeats until nothing changes: a power node survives only with an alive
/// path to an alive generator and at least one alive controller; a
/// communication node survives only with an alive path to an alive control
/// center and at least one alive supplying load; generators without alive
/// lines are removed.
pub fn connectivity_cascade(
    net: &InterdependentNetwork,
    initial: &Removals,
) -> Result<PhaseOneResult> {
    let mut state = net.clone();
    state.apply_removals(initial)?;
    let start_power = state.grid.graph().node_alive_mask().to_vec();
    let start_comm = state.comm.alive_mask().to_vec();
    let iterations = prune_to_fixed_point(&mut state);
    let removed = |before: &[bool], after: &[bool]| -> Vec<NodeId> {
        before
            .iter()
            .zip(after)
            .enumerate()
            .filter(|(_, (&b, &a))| b && !a)
            .map(|(i, _)| NodeId(i))
            .collect()
    };
    Ok(PhaseOneResult {
        removed_power: removed(&start_power, state.grid.graph().node_alive_mask()),
        removed_comm: removed(&start_comm, state.comm.alive_mask()),
        iterations,
    })
}

/// Runs the connectivity rules on `state` in place; returns the number of
/// passes (the last one removes nothing).
pub fn prune_to_fixed_point(state: &mut InterdependentNetwork) -> usize {
    let mut iterations = 0;
    loop {
        iterations += 1;
        let grid = &state.grid;
        let comm = &state.comm;
        let coupling = &state.coupling;

        let generators: Vec<NodeId> = grid
            .buses_with_role(BusRole::Generator)
            .filter(|&b| grid.is_bus_alive(b))
            .collect();
        let fed = grid
            .graph()
            .reachable_from(generators)
            .expect("sources are alive generators");
        let centers: Vec<NodeId> = comm.alive_control_centers().collect();
        let linked = comm
            .graph()
            .reachable_from(centers)
            .expect("sources are alive control centers");

        let control = coupling.control_edges();
        let supply = coupling.supply_edges();
        let mut kill_power: Vec<NodeId> = grid
            .graph()
            .alive_nodes()
            .filter(|&b| {
                let controlled = coupling
                    .controllers_of(b)
                    .iter()
                    .any(|&k| comm.is_alive(control[k].comm_node));
                !(fed.contains(&b) && controlled)
            })
            .collect();
        let kill_comm: Vec<NodeId> = comm
            .graph()
            .alive_nodes()
            .filter(|&c| {
                let supplied = coupling
                    .supplies_of(c)
                    .iter()
                    .any(|&k| grid.is_bus_alive(supply[k].load_bus));
                !(linked.contains(&c) && supplied)
            })
            .collect();

        for &b in &kill_power {
            state.grid.fail_bus(b);
        }
        for &c in &kill_comm {
            state.comm.fail_node(c);
        }
        let isolated: Vec<NodeId> = state
            .grid
            .buses_with_role(BusRole::Generator)
            .filter(|&g| state.grid.is_bus_alive(g) && state.grid.graph().degree(g) == 0)
            .collect();
        for &g in &isolated {
            state.grid.fail_bus(g);
        }
        kill_power.extend(isolated);
        if kill_power.is_empty() && kill_comm.is_empty() {
            return iterations;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coupling(n_power: usize, n_comm: usize, supply: &[(usize, usize)], p_req: f64) -> Coupling {
        Coupling::new(
            n_power,
            n_comm,
            supply
                .iter()
                .map(|&(l, c)| SupplyEdge {
                    load_bus: NodeId(l),
                    comm_node: NodeId(c),
                })
                .collect(),
            Vec::new(),
            p_req,
        )
        .unwrap()
    }

    #[test]
    fn ample_budget_powers_everyone() {
        let c = coupling(1, 2, &[(0, 0), (0, 1)], 3.0);
        let a = allocate_comm_power(&[10.0], &c, &[true, true]);
        assert_eq!(a.powered, vec![NodeId(0), NodeId(1)]);
        assert_eq!(a.supply_flow, vec![3.0, 3.0]);
        assert_eq!(a.delivered, vec![3.0, 3.0]);
    }

    #[test]
    fn short_budget_prefers_smaller_id() {
        let c = coupling(1, 2, &[(0, 0), (0, 1)], 3.0);
        let a = allocate_comm_power(&[3.0], &c, &[true, true]);
        assert_eq!(a.powered, vec![NodeId(0)]);
        assert_eq!(a.delivered[1], 0.0);
        // A dead node does not take the budget.
        let a = allocate_comm_power(&[3.0], &c, &[false, true]);
        assert_eq!(a.powered, vec![NodeId(1)]);
    }

    #[test]
    fn two_loads_share_one_node() {
        let c = coupling(2, 1, &[(0, 0), (1, 0)], 4.0);
        let a = allocate_comm_power(&[2.0, 2.0], &c, &[true]);
        assert_eq!(a.powered, vec![NodeId(0)]);
        assert_eq!(a.supply_flow, vec![2.0, 2.0]);
    }

    #[test]
    fn rerouting_admits_a_later_node() {
        // Node 0 first draws from load 0; node 1 only reaches load 0, so the
        // search must move node 0 over to load 1.
        let c = coupling(2, 2, &[(0, 0), (1, 0), (0, 1)], 2.0);
        let a = allocate_comm_power(&[2.0, 2.0], &c, &[true, true]);
        assert_eq!(a.powered, vec![NodeId(0), NodeId(1)]);
        assert_eq!(a.delivered, vec![2.0, 2.0]);
        assert!((a.supply_flow[0] + a.supply_flow[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unsupported_nodes() {
        let control = vec![
            ControlEdge {
                comm_node: NodeId(0),
                power_bus: NodeId(0),
            },
            ControlEdge {
                comm_node: NodeId(1),
                power_bus: NodeId(0),
            },
            ControlEdge {
                comm_node: NodeId(1),
                power_bus: NodeId(1),
            },
        ];
        let c = Coupling::new(3, 2, Vec::new(), control, 0.0).unwrap();
        // Bus 2 has no controller at all.
        assert_eq!(
            unsupported_power_nodes(&[true, true, true], &[true, true], &c),
            vec![NodeId(2)]
        );
        assert_eq!(
            unsupported_power_nodes(&[true, true, false], &[true, false], &c),
            vec![NodeId(1)]
        );
        assert_eq!(
            unsupported_power_nodes(&[true, true, false], &[true, true], &c),
            vec![]
        );
    }

    #[test]
    fn coupling_validation() {
        assert!(Coupling::new(1, 1, Vec::new(), Vec::new(), -1.0).is_err());
        let dup = vec![
            SupplyEdge {
                load_bus: NodeId(0),
                comm_node: NodeId(0),
            };
            2
        ];
        assert!(Coupling::new(1, 1, dup, Vec::new(), 1.0).is_err());
        let out = vec![SupplyEdge {
            load_bus: NodeId(3),
            comm_node: NodeId(0),
        }];
        assert!(Coupling::new(1, 1, out, Vec::new(), 1.0).is_err());
    }
}
