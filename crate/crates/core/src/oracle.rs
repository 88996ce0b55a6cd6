//! Ground-truth solvers at desk scale: exact Steiner trees by the
//! Dreyfus–Wagner dynamic program (up to 14 terminals) and exact spanners by
//! branch-and-bound over edge subsets (up to 40 edges), plus a fingerprint-
//! keyed result cache so long labeling runs are resumable.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{GraphError, PathTable, Sparsification};
use crate::instance::{Instance, ProblemKind};
use crate::sparsifiers::Validity;

pub const MAX_TERMINALS: usize = 14;
pub const MAX_EDGES: usize = 40;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("exact Steiner solver handles at most {MAX_TERMINALS} terminals, got {got}")]
    TerminalLimitExceeded { got: usize },
    #[error("exact spanner solver handles at most {MAX_EDGES} edges, got {got}")]
    EdgeLimitExceeded { got: usize },
    #[error("exact solve exceeded its budget of {budget:?}")]
    Timeout { budget: Duration },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// What the spanner search minimizes. Acceptance uses total weight; edge
/// count is kept as an alternative objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    TotalWeight,
    EdgeCount,
}

/// Exact solve dispatched on the instance kind.
pub fn exact(inst: &Instance, budget: Option<Duration>) -> Result<Sparsification, OracleError> {
    match inst.kind() {
        ProblemKind::SteinerTree => exact_steiner(inst),
        _ => exact_spanner(inst, Objective::TotalWeight, budget),
    }
}

/// Minimum-weight tree spanning the terminals, by dynamic programming over
/// terminal subsets: dp[mask][v] is the cheapest tree connecting the
/// terminals in `mask` plus node `v`, built by merging two subtrees at a
/// node and relaxing through shortest paths.
pub fn exact_steiner(inst: &Instance) -> Result<Sparsification, OracleError> {
    let terminals = inst.terminals();
    let k = terminals.len();
    if k > MAX_TERMINALS {
        return Err(OracleError::TerminalLimitExceeded { got: k });
    }
    let g = inst.graph();
    let n = g.node_count();
    let tables: Vec<PathTable> = (0..n).map(|u| g.dijkstra(u)).collect();
    let root = terminals[k - 1];
    let others = &terminals[..k - 1];
    let full: usize = (1 << others.len()) - 1;

    let mut dp = vec![vec![f64::INFINITY; n]; full + 1];
    // Reconstruction data: the relay node each (mask, v) routes through, and
    // the submask kept on one side of the merge (0 for singleton bases).
    let mut via = vec![vec![usize::MAX; n]; full + 1];
    let mut split = vec![vec![0usize; n]; full + 1];
    for (i, &t) in others.iter().enumerate() {
        for v in 0..n {
            dp[1 << i][v] = tables[t].dist[v];
        }
    }
    for mask in 1..=full {
        if mask.count_ones() <= 1 {
            continue;
        }
        let mut merged = vec![f64::INFINITY; n];
        let mut merged_split = vec![0usize; n];
        // Enumerate splits with the lowest terminal bit pinned to one side,
        // so each unordered pair of halves is tried once.
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut s = rest;
        loop {
            let sub = s | low;
            if sub != mask {
                let other = mask ^ sub;
                for v in 0..n {
                    let c = dp[sub][v] + dp[other][v];
                    if c < merged[v] {
                        merged[v] = c;
                        merged_split[v] = sub;
                    }
                }
            }
            if s == 0 {
                break;
            }
            s = (s - 1) & rest;
        }
        for v in 0..n {
            let mut best = f64::INFINITY;
            let mut best_u = usize::MAX;
            for u in 0..n {
                let c = merged[u] + tables[u].dist[v];
                if c < best {
                    best = c;
                    best_u = u;
                }
            }
            dp[mask][v] = best;
            via[mask][v] = best_u;
            split[mask][v] = merged_split[best_u];
        }
    }

    let mut edges = BTreeSet::new();
    let mut stack = vec![(full, root)];
    while let Some((mask, v)) = stack.pop() {
        if mask.count_ones() == 1 {
            let t = others[mask.trailing_zeros() as usize];
            edges.extend(tables[t].path_edges_to(v).expect("instance graphs are connected"));
            continue;
        }
        let u = via[mask][v];
        edges.extend(tables[u].path_edges_to(v).expect("instance graphs are connected"));
        let sub = split[mask][v];
        stack.push((sub, u));
        stack.push((mask ^ sub, u));
    }
    Ok(Sparsification::from_edges(g, edges))
}

/// Minimum-cost edge subset meeting the instance's stretch predicate, by
/// depth-first branch-and-bound. Edges are decided heaviest-first with the
/// exclude branch tried before the include branch, so the first leaf reached
/// is already the greedy-pruned solution and seeds the incumbent. A branch
/// dies when the committed cost reaches the incumbent, and an edge whose
/// removal breaks the predicate (given everything still undecided) is
/// committed without branching.
pub fn exact_spanner(
    inst: &Instance,
    objective: Objective,
    budget: Option<Duration>,
) -> Result<Sparsification, OracleError> {
    let g = inst.graph();
    let m = g.edge_count();
    if m > MAX_EDGES {
        return Err(OracleError::EdgeLimitExceeded { got: m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        g.edge(b).weight.partial_cmp(&g.edge(a).weight).expect("finite").then(a.cmp(&b))
    });
    let mut search = SpannerSearch {
        inst,
        validity: Validity::new(inst),
        order,
        objective,
        budget,
        started: Instant::now(),
        available: (0..m).collect(),
        best_cost: f64::INFINITY,
        best: None,
    };
    search.dive(0, 0.0)?;
    let best = search.best.expect("the first descent always reaches a leaf");
    Ok(Sparsification::from_edges(g, best))
}

struct SpannerSearch<'a> {
    inst: &'a Instance,
    validity: Validity,
    order: Vec<usize>,
    objective: Objective,
    budget: Option<Duration>,
    started: Instant,
    /// Committed-in edges plus everything not yet decided; invariant: valid.
    available: BTreeSet<usize>,
    best_cost: f64,
    best: Option<BTreeSet<usize>>,
}

impl SpannerSearch<'_> {
    fn cost(&self, edge: usize) -> f64 {
        match self.objective {
            Objective::TotalWeight => self.inst.graph().edge(edge).weight,
            Objective::EdgeCount => 1.0,
        }
    }

    fn dive(&mut self, depth: usize, committed: f64) -> Result<(), OracleError> {
        if let Some(budget) = self.budget {
            if self.started.elapsed() >= budget {
                return Err(OracleError::Timeout { budget });
            }
        }
        if committed >= self.best_cost {
            return Ok(());
        }
        if depth == self.order.len() {
            self.best_cost = committed;
            self.best = Some(self.available.clone());
            return Ok(());
        }
        let edge = self.order[depth];
        self.available.remove(&edge);
        let removable = self.validity.check(self.inst.graph(), &self.available);
        if removable {
            self.dive(depth + 1, committed)?;
        }
        self.available.insert(edge);
        self.dive(depth + 1, committed + self.cost(edge))?;
        Ok(())
    }
}

/// Content hash of an instance (graph, terminals, objective), used as the
/// cache key.
pub fn instance_fingerprint(inst: &Instance) -> String {
    let mut h = Sha256::new();
    let g = inst.graph();
    h.update((g.node_count() as u64).to_le_bytes());
    for e in g.edges() {
        h.update((e.u as u64).to_le_bytes());
        h.update((e.v as u64).to_le_bytes());
        h.update(e.weight.to_bits().to_le_bytes());
    }
    h.update((inst.terminals().len() as u64).to_le_bytes());
    for &t in inst.terminals() {
        h.update((t as u64).to_le_bytes());
    }
    match inst.kind() {
        ProblemKind::SteinerTree => h.update([0u8]),
        ProblemKind::MultiplicativeSpanner { alpha } => {
            h.update([1u8]);
            h.update(alpha.to_bits().to_le_bytes());
        }
        ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
            h.update([2u8]);
            h.update(beta_w_multiplier.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt cache file: {0}")]
    Corrupt(String),
}

/// Exact results keyed by instance fingerprint, persisted as JSON.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct OracleCache {
    entries: BTreeMap<String, CacheEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    cost: f64,
    edges: Vec<usize>,
}

impl OracleCache {
    /// Loads a cache; a missing file is an empty cache.
    pub fn load(path: &Path) -> Result<Self, CacheError> {
        match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| CacheError::Corrupt(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CacheError> {
        let mut text = serde_json::to_string_pretty(self).expect("cache always serializes");
        text.push('\n');
        Ok(std::fs::write(path, text)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, inst: &Instance) -> Option<Sparsification> {
        let entry = self.entries.get(&instance_fingerprint(inst))?;
        let m = inst.graph().edge_count();
        if entry.edges.iter().any(|&e| e >= m) {
            return None;
        }
        Some(Sparsification::from_edges(inst.graph(), entry.edges.iter().copied().collect()))
    }

    pub fn store(&mut self, inst: &Instance, solution: &Sparsification) {
        self.entries.insert(
            instance_fingerprint(inst),
            CacheEntry {
                cost: solution.total_weight(),
                edges: solution.edge_set().iter().copied().collect(),
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::instance::generate_geometric;
    use crate::sparsifiers::{self, is_valid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hub_instance() -> Instance {
        let g = Graph::new(
            4,
            &[(0, 1, 5.0), (0, 2, 5.0), (1, 2, 5.0), (0, 3, 3.0), (1, 3, 3.0), (2, 3, 3.0)],
        )
        .unwrap();
        Instance::new(g, vec![0, 1, 2], ProblemKind::SteinerTree, None, None).unwrap()
    }

    /// Independent check: cheapest edge subset connecting the terminals,
    /// found by scanning all 2^m subsets.
    fn steiner_by_enumeration(inst: &Instance) -> f64 {
        let g = inst.graph();
        let m = g.edge_count();
        assert!(m <= 16, "enumeration oracle is for tiny graphs");
        let mut best = f64::INFINITY;
        for bits in 0..(1u32 << m) {
            let set: BTreeSet<usize> = (0..m).filter(|&e| bits >> e & 1 == 1).collect();
            if g.is_connected_on(&set, inst.terminals()) {
                best = best.min(set.iter().map(|&e| g.edge(e).weight).sum());
            }
        }
        best
    }

    /// Random connected graph: a random spanning tree plus a few chords.
    fn small_graph(seed: u64, n: usize, extra: usize) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        for v in 1..n {
            let u = rng.gen_range(0..v);
            seen.insert((u, v));
            edges.push((u, v, rng.gen_range(1..=10) as f64));
        }
        let mut added = 0;
        while added < extra {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            let key = (u.min(v), u.max(v));
            if u != v && seen.insert(key) {
                edges.push((key.0, key.1, rng.gen_range(1..=10) as f64));
                added += 1;
            }
        }
        Graph::new(n, &edges).unwrap()
    }

    #[test]
    fn steiner_hub_instance_costs_nine() {
        let tree = exact_steiner(&hub_instance()).unwrap();
        assert_eq!(tree.total_weight(), 9.0);
        assert_eq!(tree.edge_set(), &[3, 4, 5].into_iter().collect());
    }

    #[test]
    fn steiner_matches_subset_enumeration_on_small_graphs() {
        for seed in 0..12 {
            let g = small_graph(seed, 6, 3);
            let inst =
                Instance::new(g, vec![0, 2, 4], ProblemKind::SteinerTree, None, None).unwrap();
            let expected = steiner_by_enumeration(&inst);
            let tree = exact_steiner(&inst).unwrap();
            assert_eq!(tree.total_weight(), expected, "seed {seed}");
            assert!(inst.graph().is_connected_on(tree.edge_set(), inst.terminals()));
        }
    }

    #[test]
    fn steiner_with_two_terminals_is_the_shortest_path() {
        for seed in 20..26 {
            let base = generate_geometric(12, seed).unwrap();
            let (a, b) = (base.terminals()[0], base.terminals()[1]);
            let inst = Instance::new(
                base.graph().clone(),
                vec![a, b],
                ProblemKind::SteinerTree,
                None,
                None,
            )
            .unwrap();
            let tree = exact_steiner(&inst).unwrap();
            assert_eq!(tree.total_weight(), base.graph().dijkstra(a).dist[b]);
        }
    }

    #[test]
    fn steiner_with_all_nodes_terminal_is_the_mst() {
        for seed in 30..34 {
            let base = generate_geometric(10, seed).unwrap();
            let inst = Instance::new(
                base.graph().clone(),
                (0..10).collect(),
                ProblemKind::SteinerTree,
                None,
                None,
            )
            .unwrap();
            let tree = exact_steiner(&inst).unwrap();
            let mst = base.graph().minimum_spanning_tree().unwrap();
            assert_eq!(tree.total_weight(), mst.total_weight());
        }
    }

    #[test]
    fn steiner_never_beaten_by_and_within_twice_of_the_baseline() {
        for seed in 40..46 {
            let inst = generate_geometric(14, seed).unwrap();
            let opt = exact_steiner(&inst).unwrap().total_weight();
            let approx = sparsifiers::steiner_2approx(&inst, &inst.terminal_set())
                .unwrap()
                .total_weight();
            assert!(opt <= approx);
            assert!(approx <= 2.0 * opt);
        }
    }

    #[test]
    fn steiner_terminal_cap_is_enforced() {
        let edges: Vec<(usize, usize, f64)> = (0..15).map(|i| (i, i + 1, 1.0)).collect();
        let g = Graph::new(16, &edges).unwrap();
        let inst =
            Instance::new(g, (0..15).collect(), ProblemKind::SteinerTree, None, None).unwrap();
        assert_eq!(
            exact_steiner(&inst).unwrap_err(),
            OracleError::TerminalLimitExceeded { got: 15 }
        );
    }

    fn mult_instance(g: Graph, terminals: Vec<usize>, alpha: f64) -> Instance {
        Instance::new(g, terminals, ProblemKind::MultiplicativeSpanner { alpha }, None, None)
            .unwrap()
    }

    /// Independent check over all 2^m subsets with the shared predicate.
    fn spanner_by_enumeration(inst: &Instance) -> f64 {
        let g = inst.graph();
        let m = g.edge_count();
        assert!(m <= 16);
        let mut best = f64::INFINITY;
        for bits in 0..(1u32 << m) {
            let set: BTreeSet<usize> = (0..m).filter(|&e| bits >> e & 1 == 1).collect();
            if is_valid(inst, &set) {
                best = best.min(set.iter().map(|&e| g.edge(e).weight).sum());
            }
        }
        best
    }

    #[test]
    fn spanner_triangle_drops_the_heavy_edge() {
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2.0)]).unwrap();
        let inst = mult_instance(g, vec![0, 1, 2], 2.0);
        let h = exact_spanner(&inst, Objective::TotalWeight, None).unwrap();
        assert_eq!(h.total_weight(), 2.0);
        assert_eq!(h.edge_set(), &[0, 1].into_iter().collect());
    }

    #[test]
    fn spanner_alpha_one_takes_the_unique_preserver() {
        let g = Graph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 9.0)]).unwrap();
        let inst = mult_instance(g, vec![0, 3], 1.0);
        let h = exact_spanner(&inst, Objective::TotalWeight, None).unwrap();
        assert_eq!(h.edge_set(), &[0, 1, 2].into_iter().collect());
    }

    #[test]
    fn spanner_matches_subset_enumeration() {
        for seed in 50..58 {
            let g = small_graph(seed, 6, 4);
            let inst = mult_instance(g, vec![0, 1, 5], 2.0);
            let expected = spanner_by_enumeration(&inst);
            let h = exact_spanner(&inst, Objective::TotalWeight, None).unwrap();
            assert_eq!(h.total_weight(), expected, "seed {seed}");
            assert!(is_valid(&inst, h.edge_set()));
        }
    }

    #[test]
    fn additive_oracle_not_beaten_by_the_construction() {
        for seed in 60..64 {
            let g = small_graph(seed, 7, 4);
            let inst = Instance::new(
                g,
                vec![0, 3, 6],
                ProblemKind::AdditiveSpanner { beta_w_multiplier: 2.0 },
                None,
                None,
            )
            .unwrap();
            let built = sparsifiers::construct(&inst, &inst.terminal_set()).unwrap();
            let opt = exact_spanner(&inst, Objective::TotalWeight, None).unwrap();
            assert!(opt.total_weight() <= built.total_weight());
        }
    }

    #[test]
    fn edge_count_objective_minimizes_cardinality() {
        // Two unit edges vs one weight-3 edge between the terminals: fewer
        // edges prefers the single heavy edge, lighter weight the pair.
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)]).unwrap();
        let inst = mult_instance(g, vec![0, 2], 2.0);
        let by_count = exact_spanner(&inst, Objective::EdgeCount, None).unwrap();
        assert_eq!(by_count.edge_count(), 1);
        let by_weight = exact_spanner(&inst, Objective::TotalWeight, None).unwrap();
        assert_eq!(by_weight.total_weight(), 2.0);
    }

    #[test]
    fn spanner_caps_and_budget() {
        let mut edges = Vec::new();
        for u in 0..10 {
            for v in (u + 1)..10 {
                edges.push((u, v, 1.0));
            }
        }
        let g = Graph::new(10, &edges).unwrap();
        let inst = mult_instance(g, vec![0, 1], 2.0);
        assert_eq!(
            exact_spanner(&inst, Objective::TotalWeight, None).unwrap_err(),
            OracleError::EdgeLimitExceeded { got: 45 }
        );

        let g = small_graph(70, 8, 6);
        let inst = mult_instance(g, vec![0, 7], 2.0);
        assert_eq!(
            exact_spanner(&inst, Objective::TotalWeight, Some(Duration::ZERO)).unwrap_err(),
            OracleError::Timeout { budget: Duration::ZERO }
        );
    }

    #[test]
    fn dispatch_follows_the_instance_kind() {
        let steiner = exact(&hub_instance(), None).unwrap();
        assert_eq!(steiner.total_weight(), 9.0);
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 2.0)]).unwrap();
        let spanner = exact(&mult_instance(g, vec![0, 1, 2], 2.0), None).unwrap();
        assert_eq!(spanner.total_weight(), 2.0);
    }

    #[test]
    fn repeated_solves_are_identical() {
        let inst = generate_geometric(12, 77).unwrap();
        let a = exact_steiner(&inst).unwrap();
        let b = exact_steiner(&inst).unwrap();
        assert_eq!(a.edge_set(), b.edge_set());
    }

    #[test]
    fn cache_round_trips_and_distinguishes_instances() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let a = generate_geometric(10, 1).unwrap();
        let b = generate_geometric(10, 2).unwrap();
        let solved = exact_steiner(&a).unwrap();

        let mut cache = OracleCache::load(&path).unwrap();
        assert!(cache.is_empty());
        cache.store(&a, &solved);
        cache.save(&path).unwrap();

        let reloaded = OracleCache::load(&path).unwrap();
        assert_eq!(reloaded.len(), 1);
        let hit = reloaded.lookup(&a).unwrap();
        assert_eq!(hit.edge_set(), solved.edge_set());
        assert_eq!(hit.total_weight(), solved.total_weight());
        assert!(reloaded.lookup(&b).is_none());
    }

    #[test]
    fn fingerprint_tracks_kind_and_parameters() {
        let base = generate_geometric(8, 5).unwrap();
        let mult = base
            .clone()
            .with_kind(ProblemKind::MultiplicativeSpanner { alpha: 2.0 })
            .unwrap();
        let mult3 = base
            .clone()
            .with_kind(ProblemKind::MultiplicativeSpanner { alpha: 3.0 })
            .unwrap();
        let a = instance_fingerprint(&base);
        assert_eq!(a, instance_fingerprint(&base));
        assert_ne!(a, instance_fingerprint(&mult));
        assert_ne!(instance_fingerprint(&mult), instance_fingerprint(&mult3));
    }
}
