//! JSON document for saved scenarios.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use intergrid_core::interdependency::{ControlEdge, SupplyEdge};
use intergrid_core::network::CommRole;
use intergrid_core::scenario::ScenarioParams;
use intergrid_core::{BusRole, CommNetwork, Coupling, InterdependentNetwork, NodeId, PowerGrid};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: usize,
    pub role: BusRole,
    pub injection: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommRecord {
    pub id: usize,
    pub role: CommRole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub from: usize,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub buses: Vec<BusRecord>,
    pub lines: Vec<LineRecord>,
    pub comm_nodes: Vec<CommRecord>,
    pub comm_links: Vec<LinkRecord>,
    pub supply_edges: Vec<SupplyEdge>,
    pub control_edges: Vec<ControlEdge>,
    pub p_req: f64,
    pub fos: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ScenarioParams>,
}

impl ScenarioFile {
    /// Snapshot of an intact network.
    pub fn from_network(net: &InterdependentNetwork, params: &ScenarioParams) -> Self {
        let grid = &net.grid;
        let buses = grid
            .graph()
            .nodes()
            .map(|(id, b)| BusRecord {
                id: id.0,
                role: b.role,
                injection: b.injection,
            })
            .collect();
        let lines = grid
            .graph()
            .edges()
            .map(|(id, e)| LineRecord {
                id: id.0,
                from: e.from.0,
                to: e.to.0,
                reactance: e.data.reactance,
                capacity: e.data.capacity,
            })
            .collect();
        let comm_nodes = net
            .comm
            .graph()
            .nodes()
            .map(|(id, n)| CommRecord { id: id.0, role: n.role })
            .collect();
        let comm_links = net
            .comm
            .graph()
            .edges()
            .map(|(_, e)| LinkRecord {
                from: e.from.0,
                to: e.to.0,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            buses,
            lines,
            comm_nodes,
            comm_links,
            supply_edges: net.coupling.supply_edges().to_vec(),
            control_edges: net.coupling.control_edges().to_vec(),
            p_req: net.coupling.p_req(),
            fos: params.fos,
            seed: params.seed,
            params: Some(params.clone()),
        }
    }

    pub fn to_network(&self) -> anyhow::Result<InterdependentNetwork> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        let mut grid = PowerGrid::new();
        for (k, b) in self.buses.iter().enumerate() {
            if b.id != k {
                bail!("bus ids must be 0..n in order; found {} at position {k}", b.id);
            }
            grid.add_bus(b.role, b.injection)?;
        }
        for (k, l) in self.lines.iter().enumerate() {
            if l.id != k {
                bail!("line ids must be 0..m in order; found {} at position {k}", l.id);
            }
            let id = grid.add_line(NodeId(l.from), NodeId(l.to), l.reactance)?;
            if let Some(cap) = l.capacity {
                grid.set_capacity(id, cap);
            }
        }
        let mut comm = CommNetwork::new();
        for (k, c) in self.comm_nodes.iter().enumerate() {
            if c.id != k {
                bail!("comm node ids must be 0..n in order; found {} at position {k}", c.id);
            }
            comm.add_node(c.role);
        }
        for l in &self.comm_links {
            comm.add_link(NodeId(l.from), NodeId(l.to))?;
        }
        let coupling = Coupling::new(
            grid.bus_count(),
            comm.node_count(),
            self.supply_edges.clone(),
            self.control_edges.clone(),
            self.p_req,
        )?;
        Ok(InterdependentNetwork::new(grid, comm, coupling)?)
    }

    /// True when every line has a capacity.
    pub fn has_capacities(&self) -> bool {
        self.lines.iter().all(|l| l.capacity.is_some())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

