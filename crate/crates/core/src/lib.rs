//! Cascading failures in interdependent power grids and communication
//! networks, and load-shedding policies that contain them.
//!
//! The power grid follows the DC power-flow model with line capacities set
//! from a factor of safety over the base-case flow. Communication nodes draw
//! power from transmission loads and control power nodes; each side fails
//! when the other stops supporting it.

pub mod cascade;
pub mod error;
pub mod graph;
pub mod interdependency;
pub mod lp;
pub mod mitigation;
pub mod network;
pub mod power_flow;
pub mod scenario;

pub use error::{Error, Result};
pub use graph::{Components, EdgeId, Graph, NodeId};
pub use interdependency::{Coupling, InterdependentNetwork, Removals};
pub use network::{BusRole, CommNetwork, CommRole, PowerGrid};
