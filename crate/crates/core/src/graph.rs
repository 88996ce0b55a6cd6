//! Weighted undirected graphs and the shortest-path / spanning-tree /
//! metric-closure primitives the rest of the crate is built on.
//!
//! Nodes are dense ids `0..n`. Graphs are immutable after construction, so
//! they can be shared freely across threads; every operation here is a pure
//! function of its inputs.
//!
//! Determinism rules used throughout:
//! - shortest-path ties are broken towards the smallest predecessor id, so
//!   parent trees (and therefore witness paths) are canonical;
//! - spanning-tree ties are broken by scanning edges in `(weight, u, v)`
//!   order.

use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge ({u}, {v}) is invalid for a graph on {nodes} nodes")]
    InvalidEdge { u: usize, v: usize, nodes: usize },
    #[error("parallel edge ({u}, {v})")]
    ParallelEdge { u: usize, v: usize },
    #[error("edge ({u}, {v}) has non-positive weight")]
    NonPositiveWeight { u: usize, v: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("requested nodes are not pairwise connected")]
    DisconnectedTerminals,
}

/// Undirected edge with a strictly positive weight. Endpoints are stored
/// canonically with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

impl Edge {
    /// The endpoint opposite to `node`.
    pub fn other(&self, node: usize) -> usize {
        if node == self.u {
            self.v
        } else {
            self.u
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
}

/// Immutable weighted undirected graph with adjacency access.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<Neighbor>>,
}

impl Graph {
    /// Builds a graph from `(u, v, weight)` triples, rejecting self-loops,
    /// parallel edges, and non-positive weights.
    pub fn new(node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut canon = Vec::with_capacity(edges.len());
        let mut adj = vec![Vec::new(); node_count];
        for &(a, b, weight) in edges {
            if a == b || a >= node_count || b >= node_count {
                return Err(GraphError::InvalidEdge { u: a, v: b, nodes: node_count });
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((u, v)) {
                return Err(GraphError::ParallelEdge { u, v });
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(GraphError::NonPositiveWeight { u, v });
            }
            let edge = canon.len();
            canon.push(Edge { u, v, weight });
            adj[u].push(Neighbor { node: v, edge });
            adj[v].push(Neighbor { node: u, edge });
        }
        Ok(Graph { node_count, edges: canon, adj })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> Edge {
        self.edges[index]
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    /// Maximum edge weight `W` (0 for an edgeless graph).
    pub fn max_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).fold(0.0, f64::max)
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let all: Vec<usize> = (0..self.node_count).collect();
        let every_edge: BTreeSet<usize> = (0..self.edges.len()).collect();
        self.is_connected_on(&every_edge, &all)
    }

    /// True iff all of `nodes` lie in one connected component of the subgraph
    /// induced by `edge_set`.
    pub fn is_connected_on(&self, edge_set: &BTreeSet<usize>, nodes: &[usize]) -> bool {
        let mut first = match nodes.first() {
            Some(&n) => n,
            None => return true,
        };
        if nodes.len() == 1 {
            return true;
        }
        let mut dsu = Dsu::new(self.node_count);
        for &e in edge_set {
            let edge = self.edges[e];
            dsu.union(edge.u, edge.v);
        }
        first = dsu.find(first);
        nodes.iter().all(|&n| dsu.find(n) == first)
    }

    /// Single-source shortest paths. Unreachable nodes get `f64::INFINITY`.
    /// Equal-length paths resolve to the smallest predecessor id, which makes
    /// the parent tree independent of heap pop order.
    pub fn dijkstra(&self, source: usize) -> PathTable {
        self.dijkstra_with(source, |_| true)
    }

    /// Dijkstra restricted to the subgraph induced by `edge_set`.
    pub fn dijkstra_on(&self, edge_set: &BTreeSet<usize>, source: usize) -> PathTable {
        self.dijkstra_with(source, |e| edge_set.contains(&e))
    }

    fn dijkstra_with(&self, source: usize, allowed: impl Fn(usize) -> bool) -> PathTable {
        assert!(source < self.node_count, "dijkstra source out of range");
        let mut dist = vec![f64::INFINITY; self.node_count];
        let mut parent = vec![None; self.node_count];
        let mut parent_edge = vec![None; self.node_count];
        let mut settled = vec![false; self.node_count];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry { dist: 0.0, node: source });
        while let Some(HeapEntry { node: u, .. }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            for nb in &self.adj[u] {
                if !allowed(nb.edge) {
                    continue;
                }
                let v = nb.node;
                let candidate = dist[u] + self.edges[nb.edge].weight;
                if candidate < dist[v] {
                    dist[v] = candidate;
                    parent[v] = Some(u);
                    parent_edge[v] = Some(nb.edge);
                    heap.push(HeapEntry { dist: candidate, node: v });
                } else if candidate == dist[v] && parent[v].map_or(false, |p| u < p) {
                    parent[v] = Some(u);
                    parent_edge[v] = Some(nb.edge);
                }
            }
        }
        PathTable { source, dist, parent, parent_edge }
    }

    /// Minimum spanning tree via Kruskal over edges sorted by
    /// `(weight, u, v)`.
    pub fn minimum_spanning_tree(&self) -> Result<Sparsification, GraphError> {
        let mut order: Vec<usize> = (0..self.edges.len()).collect();
        order.sort_by(|&a, &b| edge_sort_key(&self.edges[a]).partial_cmp(&edge_sort_key(&self.edges[b])).unwrap());
        let mut dsu = Dsu::new(self.node_count);
        let mut chosen = BTreeSet::new();
        for e in order {
            let edge = self.edges[e];
            if dsu.union(edge.u, edge.v) {
                chosen.insert(e);
            }
        }
        if self.node_count > 0 && chosen.len() != self.node_count - 1 {
            return Err(GraphError::Disconnected);
        }
        Ok(Sparsification::from_edges(self, chosen))
    }

    /// Complete graph over `nodes` weighted by shortest-path distances, with
    /// one canonical witness path retained per closure edge.
    pub fn metric_closure(&self, nodes: &[usize]) -> Result<MetricClosure, GraphError> {
        let originals = nodes.to_vec();
        let k = originals.len();
        let tables: Vec<PathTable> = originals.iter().map(|&u| self.dijkstra(u)).collect();
        let mut closure_edges = Vec::new();
        let mut witness = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let d = tables[i].dist[originals[j]];
                if !d.is_finite() {
                    return Err(GraphError::DisconnectedTerminals);
                }
                closure_edges.push((i, j, d));
                witness.push(
                    tables[i]
                        .path_edges_to(originals[j])
                        .expect("finite distance implies a witness path"),
                );
            }
        }
        let graph = Graph::new(k, &closure_edges).expect("closure edges are canonical");
        Ok(MetricClosure { graph, originals, witness })
    }
}

fn edge_sort_key(e: &Edge) -> (f64, usize, usize) {
    (e.weight, e.u, e.v)
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Min-heap on (dist, node); weights are finite so total_cmp is safe.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree from one source.
#[derive(Debug, Clone)]
pub struct PathTable {
    pub source: usize,
    pub dist: Vec<f64>,
    pub parent: Vec<Option<usize>>,
    pub parent_edge: Vec<Option<usize>>,
}

impl PathTable {
    /// Edge indices of the witness path source → `target`, or `None` when
    /// unreachable. The source itself yields an empty path.
    pub fn path_edges_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut edges = Vec::new();
        let mut at = target;
        while at != self.source {
            let e = self.parent_edge[at].expect("reachable non-source node has a parent edge");
            edges.push(e);
            at = self.parent[at].expect("reachable non-source node has a parent");
        }
        edges.reverse();
        Some(edges)
    }
}

/// An edge subset of a parent graph with its cached total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Sparsification {
    edges: BTreeSet<usize>,
    total_weight: f64,
}

impl Sparsification {
    pub fn from_edges(graph: &Graph, edges: BTreeSet<usize>) -> Self {
        let total_weight = edges.iter().map(|&e| graph.edge(e).weight).sum();
        Sparsification { edges, total_weight }
    }

    pub fn edge_set(&self) -> &BTreeSet<usize> {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Recomputes the weight from the parent graph; equals `total_weight`
    /// exactly because both sum the same values in ascending edge order.
    pub fn recomputed_weight(&self, graph: &Graph) -> f64 {
        self.edges.iter().map(|&e| graph.edge(e).weight).sum()
    }

    /// All endpoints touched by the edge subset.
    pub fn nodes(&self, graph: &Graph) -> BTreeSet<usize> {
        let mut nodes = BTreeSet::new();
        for &e in &self.edges {
            let edge = graph.edge(e);
            nodes.insert(edge.u);
            nodes.insert(edge.v);
        }
        nodes
    }
}

/// Metric closure of a node subset: closure node `i` is `originals[i]`, and
/// closure edge `k` expands to the original edge indices `witness[k]`.
#[derive(Debug, Clone)]
pub struct MetricClosure {
    pub graph: Graph,
    pub originals: Vec<usize>,
    pub witness: Vec<Vec<usize>>,
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true when the two components were distinct.
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
