//! Undirected graph with alive-marking.
//!
//! Nodes and edges are never removed. Failures mark them dead, and every
//! query works on the alive part unless told otherwise. The adjacency index
//! only holds alive edges between alive nodes and is kept sorted by neighbor
//! id so that traversals visit nodes in ascending order.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense index of a node within its network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

/// Dense index of an edge within its network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl EdgeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub struct Edge<E> {
    pub from: NodeId,
    pub to: NodeId,
    pub data: E,
    alive: bool,
}

impl<E> Edge<E> {
    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// The endpoint opposite to `node`.
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.from == node {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Clone, Debug)]
pub struct Graph<N, E> {
    nodes: Vec<N>,
    node_alive: Vec<bool>,
    edges: Vec<Edge<E>>,
    adjacency: Vec<Vec<(NodeId, EdgeId)>>,
    pairs: HashMap<(usize, usize), EdgeId>,
}

impl<N, E> Default for Graph<N, E> {
    fn default() -> Self {
        Self {
            nodes: Vec::new(),
            node_alive: Vec::new(),
            edges: Vec::new(),
            adjacency: Vec::new(),
            pairs: HashMap::new(),
        }
    }
}

impl<N, E> Graph<N, E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, data: N) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(data);
        self.node_alive.push(true);
        self.adjacency.push(Vec::new());
        id
    }

    /// Adds an undirected edge. Self-loops and parallel edges are rejected.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, data: E) -> Result<EdgeId> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::SelfLoop(from.0));
        }
        if self.find_edge(from, to).is_some() {
            return Err(Error::ParallelEdge(from.0, to.0));
        }
        let id = EdgeId(self.edges.len());
        self.pairs.insert(pair_key(from, to), id);
        let alive = self.node_alive[from.0] && self.node_alive[to.0];
        self.edges.push(Edge {
            from,
            to,
            data,
            alive,
        });
        if alive {
            self.link(from, to, id);
        }
        Ok(id)
    }

    fn check_node(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownNode(id.0))
        }
    }

    fn link(&mut self, a: NodeId, b: NodeId, edge: EdgeId) {
        for (u, v) in [(a, b), (b, a)] {
            let list = &mut self.adjacency[u.0];
            let pos = list.partition_point(|&(n, _)| n < v);
            list.insert(pos, (v, edge));
        }
    }

    fn unlink(&mut self, a: NodeId, b: NodeId) {
        for (u, v) in [(a, b), (b, a)] {
            let list = &mut self.adjacency[u.0];
            if let Ok(pos) = list.binary_search_by(|&(n, _)| n.cmp(&v)) {
                list.remove(pos);
            }
        }
    }

    /// Any edge (alive or dead) joining `a` and `b`.
    pub fn find_edge(&self, a: NodeId, b: NodeId) -> Option<EdgeId> {
        self.pairs.get(&pair_key(a, b)).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> &N {
        &self.nodes[id.0]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut N {
        &mut self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge<E> {
        &self.edges[id.0]
    }

    pub fn edge_data_mut(&mut self, id: EdgeId) -> &mut E {
        &mut self.edges[id.0].data
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.node_alive[id.0]
    }

    pub fn is_edge_alive(&self, id: EdgeId) -> bool {
        self.edges[id.0].alive
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &N)> + '_ {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge<E>)> + '_ {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i), e))
    }

    pub fn alive_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&n| self.node_alive[n.0])
    }

    pub fn alive_edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.edge_ids().filter(|&e| self.edges[e.0].alive)
    }

    pub fn alive_node_count(&self) -> usize {
        self.node_alive.iter().filter(|&&a| a).count()
    }

    pub fn node_alive_mask(&self) -> &[bool] {
        &self.node_alive
    }

    pub fn edge_alive_mask(&self) -> Vec<bool> {
        self.edges.iter().map(|e| e.alive).collect()
    }

    /// Alive neighbors over alive edges, in ascending id order.
    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = (NodeId, EdgeId)> + '_ {
        self.adjacency[id.0].iter().copied()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[id.0].len()
    }

    /// Marks an edge dead. Returns false if it was already dead.
    pub fn kill_edge(&mut self, id: EdgeId) -> bool {
        let edge = &mut self.edges[id.0];
        if !edge.alive {
            return false;
        }
        edge.alive = false;
        let (a, b) = (edge.from, edge.to);
        self.unlink(a, b);
        true
    }

    /// Marks a node dead together with its incident edges. Returns the edges
    /// that died as a consequence.
    pub fn kill_node(&mut self, id: NodeId) -> Vec<EdgeId> {
        if !self.node_alive[id.0] {
            return Vec::new();
        }
        self.node_alive[id.0] = false;
        let incident: Vec<EdgeId> = self.adjacency[id.0].iter().map(|&(_, e)| e).collect();
        for &e in &incident {
            self.kill_edge(e);
        }
        incident
    }

    /// Partition of the nodes into connected components.
    ///
    /// With `alive_only` the partition covers alive nodes joined by alive
    /// edges and dead nodes carry no label. Otherwise every node and edge is
    /// considered. Each component is labeled by its smallest member.
    pub fn connected_components(&self, alive_only: bool) -> Components {
        let n = self.nodes.len();
        let mut sets = DisjointSet::new(n);
        for e in &self.edges {
            if !alive_only || e.alive {
                sets.union(e.from.0, e.to.0);
            }
        }
        let mut min_member = vec![usize::MAX; n];
        for i in 0..n {
            if alive_only && !self.node_alive[i] {
                continue;
            }
            let root = sets.find(i);
            min_member[root] = min_member[root].min(i);
        }
        let labels = (0..n)
            .map(|i| {
                if alive_only && !self.node_alive[i] {
                    None
                } else {
                    Some(NodeId(min_member[sets.find(i)]))
                }
            })
            .collect();
        Components { labels }
    }

    /// Alive nodes joined to some source by alive edges.
    pub fn reachable_from<I>(&self, sources: I) -> Result<BTreeSet<NodeId>>
    where
        I: IntoIterator<Item = NodeId>,
    {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::new();
        for s in sources {
            self.check_node(s)?;
            if !self.node_alive[s.0] {
                return Err(Error::DeadSource(s.0));
            }
            if !seen[s.0] {
                seen[s.0] = true;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u.0] {
                if !seen[v.0] {
                    seen[v.0] = true;
                    queue.push_back(v);
                }
            }
        }
        Ok(seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| NodeId(i))
            .collect())
    }
}

fn pair_key(a: NodeId, b: NodeId) -> (usize, usize) {
    (a.0.min(b.0), a.0.max(b.0))
}

/// Component labels for every node; `None` marks an excluded (dead) node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    labels: Vec<Option<NodeId>>,
}

impl Components {
    pub fn label(&self, id: NodeId) -> Option<NodeId> {
        self.labels[id.0]
    }

    pub fn labels(&self) -> &[Option<NodeId>] {
        &self.labels
    }

    /// Members of each component, ordered by label.
    pub fn blocks(&self) -> Vec<Vec<NodeId>> {
        let mut slot = vec![usize::MAX; self.labels.len()];
        let mut blocks: Vec<Vec<NodeId>> = Vec::new();
        for (i, label) in self.labels.iter().enumerate() {
            if let Some(l) = label {
                if slot[l.0] == usize::MAX {
                    slot[l.0] = blocks.len();
                    blocks.push(Vec::new());
                }
                blocks[slot[l.0]].push(NodeId(i));
            }
        }
        blocks
    }

    pub fn count(&self) -> usize {
        self.labels
            .iter()
            .enumerate()
            .filter(|(i, l)| **l == Some(NodeId(*i)))
            .count()
    }

    pub fn largest_size(&self) -> usize {
        let mut sizes = vec![0usize; self.labels.len()];
        for l in self.labels.iter().flatten() {
            sizes[l.0] += 1;
        }
        sizes.into_iter().max().unwrap_or(0)
    }
}

/// Union-find with union by size and path halving.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if the two elements were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph<(), ()> {
        let mut g = Graph::new();
        let a = g.add_node(());
        let b = g.add_node(());
        let c = g.add_node(());
        g.add_edge(a, b, ()).unwrap();
        g.add_edge(b, c, ()).unwrap();
        g
    }

    #[test]
    fn empty_graph_has_no_components() {
        let g: Graph<(), ()> = Graph::new();
        let comps = g.connected_components(true);
        assert!(comps.blocks().is_empty());
        assert_eq!(comps.count(), 0);
        assert!(g.reachable_from([]).unwrap().is_empty());
    }

    #[test]
    fn dead_edge_splits_path() {
        let mut g = path3();
        g.kill_edge(EdgeId(1));
        let blocks = g.connected_components(true).blocks();
        assert_eq!(blocks, vec![vec![NodeId(0), NodeId(1)], vec![NodeId(2)]]);
        // Ignoring alive flags the path is whole again.
        assert_eq!(g.connected_components(false).count(), 1);
    }

    #[test]
    fn triangle_is_one_component() {
        let mut g: Graph<(), ()> = Graph::new();
        let n: Vec<_> = (0..3).map(|_| g.add_node(())).collect();
        g.add_edge(n[0], n[1], ()).unwrap();
        g.add_edge(n[1], n[2], ()).unwrap();
        g.add_edge(n[2], n[0], ()).unwrap();
        let comps = g.connected_components(true);
        assert_eq!(comps.count(), 1);
        assert_eq!(comps.largest_size(), 3);
    }

    #[test]
    fn reachability() {
        let g = path3();
        let all: BTreeSet<_> = (0..3).map(NodeId).collect();
        assert_eq!(g.reachable_from([NodeId(0)]).unwrap(), all);

        let mut g: Graph<(), ()> = Graph::new();
        let n: Vec<_> = (0..6).map(|_| g.add_node(())).collect();
        for base in [0, 3] {
            g.add_edge(n[base], n[base + 1], ()).unwrap();
            g.add_edge(n[base + 1], n[base + 2], ()).unwrap();
            g.add_edge(n[base + 2], n[base], ()).unwrap();
        }
        let got = g.reachable_from([NodeId(1)]).unwrap();
        assert_eq!(got, [0, 1, 2].into_iter().map(NodeId).collect());
    }

    #[test]
    fn dead_source_is_rejected() {
        let mut g = path3();
        g.kill_node(NodeId(1));
        assert_eq!(g.reachable_from([NodeId(1)]), Err(Error::DeadSource(1)));
        // Killing the middle node isolates the ends.
        assert_eq!(g.reachable_from([NodeId(0)]).unwrap().len(), 1);
        assert!(!g.is_edge_alive(EdgeId(0)));
        assert!(!g.is_edge_alive(EdgeId(1)));
    }

    #[test]
    fn rejects_bad_edges() {
        let mut g = path3();
        assert_eq!(g.add_edge(NodeId(0), NodeId(0), ()), Err(Error::SelfLoop(0)));
        assert_eq!(
            g.add_edge(NodeId(1), NodeId(0), ()),
            Err(Error::ParallelEdge(1, 0))
        );
        assert_eq!(g.add_edge(NodeId(0), NodeId(7), ()), Err(Error::UnknownNode(7)));
    }

    #[test]
    fn adjacency_tracks_alive_edges() {
        let mut g = path3();
        assert_eq!(g.degree(NodeId(1)), 2);
        g.kill_edge(EdgeId(0));
        assert_eq!(
            g.neighbors(NodeId(1)).collect::<Vec<_>>(),
            vec![(NodeId(2), EdgeId(1))]
        );
        assert!(!g.kill_edge(EdgeId(0)));
    }
}
