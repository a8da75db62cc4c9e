//! Power grid and communication network models.

use serde::{Deserialize, Serialize};

use crate::graph::{Components, EdgeId, Graph, NodeId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusRole {
    Generator,
    Load,
    Substation,
}

impl BusRole {
    pub fn name(self) -> &'static str {
        match self {
            BusRole::Generator => "generator",
            BusRole::Load => "load",
            BusRole::Substation => "substation",
        }
    }

    pub fn admits(self, injection: f64) -> bool {
        injection.is_finite()
            && match self {
                BusRole::Generator => injection >= 0.0,
                BusRole::Load => injection <= 0.0,
                BusRole::Substation => injection == 0.0,
            }
    }
}

/// A power node. Generators inject (positive), loads consume (negative).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerBus {
    pub role: BusRole,
    pub injection: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLine {
    pub reactance: f64,
    pub capacity: Option<f64>,
}

/// Transmission grid. Line direction `from → to` fixes the sign of flows.
#[derive(Clone, Debug, Default)]
pub struct PowerGrid {
    graph: Graph<PowerBus, PowerLine>,
}

impl PowerGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_bus(&mut self, role: BusRole, injection: f64) -> Result<NodeId> {
        if !role.admits(injection) {
            return Err(Error::InjectionRole {
                bus: self.graph.node_count(),
                role: role.name(),
                injection,
            });
        }
        Ok(self.graph.add_node(PowerBus { role, injection }))
    }

    pub fn add_line(&mut self, from: NodeId, to: NodeId, reactance: f64) -> Result<EdgeId> {
        if !(reactance.is_finite() && reactance > 0.0) {
            return Err(Error::InvalidReactance {
                line: self.graph.edge_count(),
                reactance,
            });
        }
        self.graph.add_edge(
            from,
            to,
            PowerLine {
                reactance,
                capacity: None,
            },
        )
    }

    pub fn graph(&self) -> &Graph<PowerBus, PowerLine> {
        &self.graph
    }

    pub fn bus_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn line_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn bus(&self, id: NodeId) -> &PowerBus {
        self.graph.node(id)
    }

    pub fn line(&self, id: EdgeId) -> &PowerLine {
        &self.graph.edge(id).data
    }

    pub fn endpoints(&self, id: EdgeId) -> (NodeId, NodeId) {
        let e = self.graph.edge(id);
        (e.from, e.to)
    }

    pub fn is_bus_alive(&self, id: NodeId) -> bool {
        self.graph.is_alive(id)
    }

    pub fn is_line_alive(&self, id: EdgeId) -> bool {
        self.graph.is_edge_alive(id)
    }

    pub fn injections(&self) -> Vec<f64> {
        self.graph.nodes().map(|(_, b)| b.injection).collect()
    }

    /// Overwrites an injection. The value must respect the bus role.
    pub fn set_injection(&mut self, id: NodeId, injection: f64) -> Result<()> {
        let bus = self.graph.node_mut(id);
        if !bus.role.admits(injection) {
            return Err(Error::InjectionRole {
                bus: id.0,
                role: bus.role.name(),
                injection,
            });
        }
        bus.injection = injection;
        Ok(())
    }

    pub fn set_capacity(&mut self, id: EdgeId, capacity: f64) {
        self.graph.edge_data_mut(id).capacity = Some(capacity);
    }

    /// Marks a bus failed: its injection drops to zero and its lines go dead.
    pub fn fail_bus(&mut self, id: NodeId) -> Vec<EdgeId> {
        self.graph.node_mut(id).injection = 0.0;
        self.graph.kill_node(id)
    }

    pub fn trip_line(&mut self, id: EdgeId) -> bool {
        self.graph.kill_edge(id)
    }

    /// Connected components of the alive grid, each sorted ascending.
    pub fn islands(&self) -> Vec<Vec<NodeId>> {
        self.components().blocks()
    }

    pub fn components(&self) -> Components {
        self.graph.connected_components(true)
    }

    pub fn buses_with_role(&self, role: BusRole) -> impl Iterator<Item = NodeId> + '_ {
        self.graph
            .nodes()
            .filter(move |(_, b)| b.role == role)
            .map(|(id, _)| id)
    }

    /// Sum of load magnitudes over all load buses, alive or not.
    pub fn total_load(&self) -> f64 {
        self.graph
            .nodes()
            .filter(|(_, b)| b.role == BusRole::Load)
            .map(|(_, b)| -b.injection)
            .sum()
    }

    pub fn total_generation(&self) -> f64 {
        self.graph
            .nodes()
            .filter(|(_, b)| b.role == BusRole::Generator)
            .map(|(_, b)| b.injection)
            .sum()
    }

    /// Served load magnitude per bus; zero for dead and non-load buses.
    pub fn served_loads(&self) -> Vec<f64> {
        self.graph
            .nodes()
            .map(|(id, b)| {
                if b.role == BusRole::Load && self.graph.is_alive(id) {
                    -b.injection
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Largest alive component divided by `remaining` (0 when nothing remains).
    pub fn largest_component_ratio(&self, remaining: usize) -> f64 {
        if remaining == 0 {
            return 0.0;
        }
        self.components().largest_size() as f64 / remaining as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommRole {
    Router,
    ControlCenter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommNode {
    pub role: CommRole,
}

#[derive(Clone, Debug, Default)]
pub struct CommNetwork {
    graph: Graph<CommNode, ()>,
}

impl CommNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, role: CommRole) -> NodeId {
        self.graph.add_node(CommNode { role })
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId) -> Result<EdgeId> {
        self.graph.add_edge(a, b, ())
    }

    pub fn graph(&self) -> &Graph<CommNode, ()> {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn role(&self, id: NodeId) -> CommRole {
        self.graph.node(id).role
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.graph.is_alive(id)
    }

    pub fn alive_mask(&self) -> &[bool] {
        self.graph.node_alive_mask()
    }

    pub fn fail_node(&mut self, id: NodeId) -> bool {
        let was = self.graph.is_alive(id);
        self.graph.kill_node(id);
        was
    }

    pub fn alive_control_centers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.graph
            .alive_nodes()
            .filter(|&n| self.graph.node(n).role == CommRole::ControlCenter)
    }

    /// Alive nodes with no alive path to an alive control center.
    pub fn disconnected_from_control(&self) -> Vec<NodeId> {
        let reached = self
            .graph
            .reachable_from(self.alive_control_centers().collect::<Vec<_>>())
            .expect("control centers are alive");
        self.graph
            .alive_nodes()
            .filter(|n| !reached.contains(n))
            .collect()
    }
}
