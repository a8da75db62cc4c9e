//! Seeded random interdependent networks.
//!
//! Every random choice draws from a ChaCha stream derived from the scenario
//! seed, one stream per concern, so that changing for example the coupling
//! degree leaves the grid topology untouched.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cascade::{assign_capacities, CapacityRule};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::interdependency::{ControlEdge, Coupling, InterdependentNetwork, Removals, SupplyEdge};
use crate::network::{BusRole, CommNetwork, CommRole, PowerGrid};
use crate::power_flow::balance_grid;

const STREAM_POWER_TOPOLOGY: u64 = 0;
const STREAM_POWER_ROLES: u64 = 1;
const STREAM_COMM_TOPOLOGY: u64 = 2;
const STREAM_COUPLING: u64 = 3;
const STREAM_POWER_REMOVALS: u64 = 4;
const STREAM_COMM_REMOVALS: u64 = 5;
const STREAM_COMM_ROLES: u64 = 6;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub n_power: usize,
    pub n_comm: usize,
    pub expected_degree: f64,
    pub generator_fraction: f64,
    pub control_center_fraction: f64,
    pub substation_fraction: f64,
    pub injection_range: (f64, f64),
    pub reactance: f64,
    pub fos: f64,
    pub load_factor: f64,
    /// Mean number of loads supplying a communication node.
    pub comm_interdep_degree: f64,
    /// Mean number of communication nodes controlling a power node.
    pub power_interdep_degree: f64,
    /// Join every component to the largest one with a random edge.
    pub ensure_connected: bool,
    /// Fail instead of reusing loads when communication nodes outnumber them.
    pub strict_pairing: bool,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_power: 100,
            n_comm: 100,
            expected_degree: 4.0,
            generator_fraction: 0.2,
            control_center_fraction: 0.2,
            substation_fraction: 0.0,
            injection_range: (1000.0, 2000.0),
            reactance: 1.0,
            fos: 1.2,
            load_factor: 1e-4,
            comm_interdep_degree: 1.0,
            power_interdep_degree: 1.0,
            ensure_connected: true,
            strict_pairing: false,
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        let fraction = |x: f64| x.is_finite() && x > 0.0 && x <= 1.0;
        if !fraction(self.generator_fraction) {
            return bad(format!("generator_fraction {} not in (0, 1]", self.generator_fraction));
        }
        if !fraction(self.control_center_fraction) {
            return bad(format!(
                "control_center_fraction {} not in (0, 1]",
                self.control_center_fraction
            ));
        }
        if !(self.substation_fraction >= 0.0
            && self.generator_fraction + self.substation_fraction <= 1.0)
        {
            return bad(format!("substation_fraction {} out of range", self.substation_fraction));
        }
        let (lo, hi) = self.injection_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return bad(format!("injection range [{lo}, {hi}]"));
        }
        for (name, v) in [
            ("expected_degree", self.expected_degree),
            ("comm_interdep_degree", self.comm_interdep_degree),
            ("power_interdep_degree", self.power_interdep_degree),
            ("reactance", self.reactance),
            ("fos", self.fos),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.load_factor.is_finite() && self.load_factor >= 0.0) {
            return bad(format!("load_factor must be >= 0, got {}", self.load_factor));
        }
        Ok(())
    }
}

/// G(n, p) with `p = expected_degree / (n − 1)`.
pub fn gen_erdos_renyi<R: Rng>(n: usize, expected_degree: f64, rng: &mut R) -> Result<Graph<(), ()>> {
    if !(expected_degree >= 0.0) || (n > 0 && expected_degree >= n as f64) {
        return Err(Error::InvalidParameter(format!(
            "expected degree {expected_degree} must be in [0, {n})"
        )));
    }
    let mut g = Graph::new();
    for _ in 0..n {
        g.add_node(());
    }
    if n < 2 {
        return Ok(g);
    }
    let p = expected_degree / (n - 1) as f64;
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                g.add_edge(NodeId(i), NodeId(j), ())?;
            }
        }
    }
    Ok(g)
}

/// Adds one random edge from every smaller component to the largest one.
pub fn connect_components<N, E: Default, R: Rng>(g: &mut Graph<N, E>, rng: &mut R) -> Result<usize> {
    let blocks = g.connected_components(true).blocks();
    if blocks.len() < 2 {
        return Ok(0);
    }
    let main = blocks
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.len().cmp(&b.len()).then(j.cmp(i)))
        .map(|(i, _)| i)
        .expect("at least two blocks");
    let mut joined = blocks[main].clone();
    let mut added = 0;
    for (k, block) in blocks.iter().enumerate() {
        if k == main {
            continue;
        }
        let a = *block.choose(rng).expect("blocks are nonempty");
        let b = *joined.choose(rng).expect("main block is nonempty");
        g.add_edge(a, b, E::default())?;
        joined.extend(block);
        added += 1;
    }
    Ok(added)
}

fn topology(n: usize, params: &ScenarioParams, stream_id: u64) -> Result<Graph<(), ()>> {
    let mut rng = stream(params.seed, stream_id);
    let mut g = gen_erdos_renyi(n, params.expected_degree, &mut rng)?;
    if params.ensure_connected {
        connect_components(&mut g, &mut rng)?;
    }
    Ok(g)
}

/// Random grid: Erdős–Rényi lines, roles drawn uniformly, injections uniform
/// in the range with signs by role, then each island balanced.
pub fn gen_power_grid(params: &ScenarioParams) -> Result<PowerGrid> {
    params.validate()?;
    let n = params.n_power;
    let topo = topology(n, params, STREAM_POWER_TOPOLOGY)?;
    let mut rng = stream(params.seed, STREAM_POWER_ROLES);
    let n_gen = (params.generator_fraction * n as f64).floor() as usize;
    let n_sub = (params.substation_fraction * n as f64).floor() as usize;
    if n_gen == 0 {
        return Err(Error::InvalidParameter(format!(
            "{n} buses with generator fraction {} leave no generator",
            params.generator_fraction
        )));
    }
    let mut roles = vec![BusRole::Load; n];
    let picked = sample(&mut rng, n, n_gen + n_sub);
    for (k, bus) in picked.iter().enumerate() {
        roles[bus] = if k < n_gen {
            BusRole::Generator
        } else {
            BusRole::Substation
        };
    }
    if !roles.contains(&BusRole::Load) {
        return Err(Error::ZeroLoad);
    }
    let (lo, hi) = params.injection_range;
    let mut grid = PowerGrid::new();
    for role in roles {
        let magnitude = rng.gen_range(lo..=hi);
        let injection = match role {
            BusRole::Generator => magnitude,
            BusRole::Load => -magnitude,
            BusRole::Substation => 0.0,
        };
        grid.add_bus(role, injection)?;
    }
    for (_, e) in topo.edges() {
        grid.add_line(e.from, e.to, params.reactance)?;
    }
    balance_grid(&mut grid);
    Ok(grid)
}

/// `count` values whose mean is `mean`: every value is `⌊mean⌋` or one more,
/// with the extras placed at random; never below 1.
fn exact_degrees<R: Rng>(count: usize, mean: f64, rng: &mut R) -> Vec<usize> {
    let base = mean.floor() as usize;
    let extras = ((mean - mean.floor()) * count as f64).round() as usize;
    let mut degrees = vec![base; count];
    for i in sample(rng, count, extras.min(count)) {
        degrees[i] += 1;
    }
    for d in &mut degrees {
        *d = (*d).max(1);
    }
    degrees
}

/// `preferred` (when given) followed by distinct random picks from
/// `0..universe`, `degree` in total.
fn pick_partners<R: Rng>(
    degree: usize,
    universe: usize,
    preferred: Option<usize>,
    rng: &mut R,
) -> Vec<usize> {
    let mut out: Vec<usize> = preferred.into_iter().collect();
    let mut pool: Vec<usize> = (0..universe).filter(|&x| Some(x) != preferred).collect();
    pool.shuffle(rng);
    out.extend(pool.into_iter().take(degree - out.len()));
    out.sort_unstable();
    out
}

/// Supply and control edges. Loads and communication nodes are first paired
/// one-to-one at random; a pair's load supplies its node and the node
/// controls its load. Communication nodes left without a load are partners
/// for generators and substations instead. Remaining edges go to random
/// distinct nodes so that degrees match the configured means.
pub fn gen_coupling(grid: &PowerGrid, n_comm: usize, params: &ScenarioParams) -> Result<Coupling> {
    let n_power = grid.bus_count();
    let loads: Vec<NodeId> = grid.buses_with_role(BusRole::Load).collect();
    let others: Vec<NodeId> = grid
        .graph()
        .node_ids()
        .filter(|&b| grid.bus(b).role != BusRole::Load)
        .collect();
    let mut rng = stream(params.seed, STREAM_COUPLING);

    let mut comm_order: Vec<usize> = (0..n_comm).collect();
    comm_order.shuffle(&mut rng);
    let mut load_order: Vec<usize> = (0..loads.len()).collect();
    load_order.shuffle(&mut rng);
    let pairs = n_comm.min(loads.len());
    if params.strict_pairing && n_comm > loads.len() {
        return Err(Error::InvalidCoupling(format!(
            "{n_comm} communication nodes but only {} loads to pair them with: {} short",
            loads.len(),
            n_comm - loads.len()
        )));
    }
    let mut load_of_comm = vec![None; n_comm];
    let mut comm_of_power = vec![None; n_power];
    for k in 0..pairs {
        let (c, l) = (comm_order[k], load_order[k]);
        load_of_comm[c] = Some(l);
        comm_of_power[loads[l].0] = Some(c);
    }
    let spare: Vec<usize> = comm_order[pairs..].to_vec();
    if !spare.is_empty() {
        for (k, bus) in others.iter().enumerate() {
            comm_of_power[bus.0] = Some(spare[k % spare.len()]);
        }
    }

    let supply_degrees = exact_degrees(n_comm, params.comm_interdep_degree, &mut rng);
    let mut supply = Vec::new();
    for (c, &degree) in supply_degrees.iter().enumerate() {
        if degree > loads.len() {
            return Err(Error::InvalidCoupling(format!(
                "communication node {c} needs {degree} supplying loads, only {} exist",
                loads.len()
            )));
        }
        for l in pick_partners(degree, loads.len(), load_of_comm[c], &mut rng) {
            supply.push(SupplyEdge {
                load_bus: loads[l],
                comm_node: NodeId(c),
            });
        }
    }

    let control_degrees = exact_degrees(n_power, params.power_interdep_degree, &mut rng);
    let mut control = Vec::new();
    for (b, &degree) in control_degrees.iter().enumerate() {
        if degree > n_comm {
            return Err(Error::InvalidCoupling(format!(
                "power node {b} needs {degree} controllers, only {n_comm} exist"
            )));
        }
        for c in pick_partners(degree, n_comm, comm_of_power[b], &mut rng) {
            control.push(ControlEdge {
                comm_node: NodeId(c),
                power_bus: NodeId(b),
            });
        }
    }

    let p_req = if n_comm == 0 {
        0.0
    } else {
        params.load_factor * grid.total_load() / n_comm as f64
    };
    Coupling::new(n_power, n_comm, supply, control, p_req)
}

pub fn gen_comm_network(params: &ScenarioParams) -> Result<CommNetwork> {
    let n = params.n_comm;
    let topo = topology(n, params, STREAM_COMM_TOPOLOGY)?;
    let mut rng = stream(params.seed, STREAM_COMM_ROLES);
    let n_cc = ((params.control_center_fraction * n as f64).floor() as usize).max(1).min(n);
    let mut roles = vec![CommRole::Router; n];
    for c in sample(&mut rng, n, n_cc) {
        roles[c] = CommRole::ControlCenter;
    }
    let mut comm = CommNetwork::new();
    for role in roles {
        comm.add_node(role);
    }
    for (_, e) in topo.edges() {
        comm.add_link(e.from, e.to)?;
    }
    Ok(comm)
}

/// Grid, communication network and coupling, without capacities.
pub fn gen_interdependent_network(params: &ScenarioParams) -> Result<InterdependentNetwork> {
    let grid = gen_power_grid(params)?;
    let comm = gen_comm_network(params)?;
    let coupling = gen_coupling(&grid, params.n_comm, params)?;
    InterdependentNetwork::new(grid, comm, coupling)
}

/// Full scenario with line capacities from the base-case flows.
pub fn generate_scenario(params: &ScenarioParams) -> Result<InterdependentNetwork> {
    let mut net = gen_interdependent_network(params)?;
    assign_capacities(&mut net.grid, &CapacityRule::with_factor(params.fos))?;
    Ok(net)
}

/// Initial failures: the first `round(fraction · n)` nodes of a seeded
/// permutation, so that larger fractions contain smaller ones.
pub fn select_removals(
    n_power: usize,
    n_comm: usize,
    fraction: f64,
    seed: u64,
    joint: bool,
) -> Result<Removals> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "removal fraction {fraction} not in [0, 1]"
        )));
    }
    let pick = |n: usize, stream_id: u64| -> Vec<NodeId> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(seed, stream_id));
        let k = (fraction * n as f64).round() as usize;
        let mut out: Vec<NodeId> = order[..k].iter().map(|&i| NodeId(i)).collect();
        out.sort_unstable();
        out
    };
    Ok(Removals {
        power: pick(n_power, STREAM_POWER_REMOVALS),
        comm: if joint {
            pick(n_comm, STREAM_COMM_REMOVALS)
        } else {
            Vec::new()
        },
    })
}
