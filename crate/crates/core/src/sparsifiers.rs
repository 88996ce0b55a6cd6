//! Baseline sparsifier constructions and pruning.
//!
//! All three constructions take a seed node set `S ⊇ terminals`: enlarging
//! `S` changes (and can improve) the structure they build, which is exactly
//! the lever the tree search pulls. Outputs are edge subsets of the original
//! graph.
//!
//! Weights in the supported corpus are integers, so every distance and
//! budget below is exact in f64 and comparisons are done without epsilons;
//! ties always resolve through canonical `(weight, id)` orders, making every
//! output bit-reproducible.

use std::collections::BTreeSet;

use crate::graph::{Graph, GraphError, Sparsification};
use crate::instance::{Instance, ProblemKind};

fn assert_seed_set(inst: &Instance, s: &BTreeSet<usize>) {
    assert!(
        inst.terminals().iter().all(|t| s.contains(t)),
        "seed set must contain every terminal"
    );
}

/// Builds a sparsifier for the instance's objective from seed set `s`.
pub fn construct(inst: &Instance, s: &BTreeSet<usize>) -> Result<Sparsification, GraphError> {
    match inst.kind() {
        ProblemKind::SteinerTree => steiner_2approx(inst, s),
        ProblemKind::MultiplicativeSpanner { alpha } => greedy_mult_spanner(inst, s, alpha),
        ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
            Ok(additive_spanner(inst, s, beta_w_multiplier))
        }
    }
}

/// Prunes a valid sparsifier down to the instance's objective.
pub fn prune(inst: &Instance, h: Sparsification) -> Sparsification {
    match inst.kind() {
        ProblemKind::SteinerTree => prune_steiner(inst, h),
        _ => prune_spanner(inst, h, &Validity::new(inst)),
    }
}

/// Construct from `s`, then prune. The usual evaluation path.
pub fn construct_pruned(
    inst: &Instance,
    s: &BTreeSet<usize>,
) -> Result<Sparsification, GraphError> {
    Ok(prune(inst, construct(inst, s)?))
}

/// True iff the edge subset meets the instance's objective over the
/// terminals.
pub fn is_valid(inst: &Instance, edges: &BTreeSet<usize>) -> bool {
    Validity::new(inst).check(inst.graph(), edges)
}

/// The instance objective as a reusable predicate: terminal connectivity
/// for tree instances, per-pair distance budgets for spanners. Budgets are
/// precomputed from the full graph once, so repeated checks only pay for
/// restricted shortest paths.
pub struct Validity {
    terminals: Vec<usize>,
    budgets: Option<Vec<(usize, usize, f64)>>,
}

impl Validity {
    pub fn new(inst: &Instance) -> Self {
        let budgets = match inst.kind() {
            ProblemKind::SteinerTree => None,
            ProblemKind::MultiplicativeSpanner { alpha } => {
                Some(pair_budgets(inst, |d| alpha * d))
            }
            ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
                let slack = beta_w_multiplier * inst.graph().max_weight();
                Some(pair_budgets(inst, move |d| d + slack))
            }
        };
        Validity { terminals: inst.terminals().to_vec(), budgets }
    }

    pub fn check(&self, g: &Graph, edges: &BTreeSet<usize>) -> bool {
        match &self.budgets {
            None => g.is_connected_on(edges, &self.terminals),
            Some(budgets) => {
                let mut source = usize::MAX;
                let mut table = None;
                for &(u, v, bound) in budgets {
                    if u != source {
                        table = Some(g.dijkstra_on(edges, u));
                        source = u;
                    }
                    if table.as_ref().expect("table set above").dist[v] > bound {
                        return false;
                    }
                }
                true
            }
        }
    }
}

fn pair_budgets(inst: &Instance, bound: impl Fn(f64) -> f64) -> Vec<(usize, usize, f64)> {
    let terminals = inst.terminals();
    let mut budgets = Vec::new();
    for (i, &u) in terminals.iter().enumerate() {
        let table = inst.graph().dijkstra(u);
        for &v in &terminals[i + 1..] {
            budgets.push((u, v, bound(table.dist[v])));
        }
    }
    budgets
}

/// Steiner tree from seed set `s`: minimum spanning tree of the metric
/// closure on `s`, expanded back to witness shortest paths. A classical
/// 2-approximation when `s` is exactly the terminal set.
pub fn steiner_2approx(
    inst: &Instance,
    s: &BTreeSet<usize>,
) -> Result<Sparsification, GraphError> {
    assert_seed_set(inst, s);
    let nodes: Vec<usize> = s.iter().copied().collect();
    let closure = inst.graph().metric_closure(&nodes)?;
    let mst = closure.graph.minimum_spanning_tree()?;
    let mut edges = BTreeSet::new();
    for &ce in mst.edge_set() {
        edges.extend(closure.witness[ce].iter().copied());
    }
    Ok(Sparsification::from_edges(inst.graph(), edges))
}

/// Greedy multiplicative spanner over the metric closure on `s`: closure
/// edges are scanned in nondecreasing weight, and an edge (u, v, w) is
/// admitted iff the current admitted set leaves d(u, v) > α·w (absent paths
/// count as infinite, so the first edge between two components is always
/// admitted). Admitted closure edges expand to witness paths at the end.
/// The result keeps every pair of `s` within stretch α.
pub fn greedy_mult_spanner(
    inst: &Instance,
    s: &BTreeSet<usize>,
    alpha: f64,
) -> Result<Sparsification, GraphError> {
    assert_seed_set(inst, s);
    let nodes: Vec<usize> = s.iter().copied().collect();
    let closure = inst.graph().metric_closure(&nodes)?;
    let mut order: Vec<usize> = (0..closure.graph.edge_count()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (closure.graph.edge(a), closure.graph.edge(b));
        (ea.weight, ea.u, ea.v).partial_cmp(&(eb.weight, eb.u, eb.v)).expect("finite weights")
    });
    let mut admitted = BTreeSet::new();
    for ce in order {
        let edge = closure.graph.edge(ce);
        let d_current = closure.graph.dijkstra_on(&admitted, edge.u).dist[edge.v];
        if alpha * edge.weight <= d_current {
            admitted.insert(ce);
        }
    }
    let mut edges = BTreeSet::new();
    for &ce in &admitted {
        edges.extend(closure.witness[ce].iter().copied());
    }
    Ok(Sparsification::from_edges(inst.graph(), edges))
}

/// Smallest k with k³ ≥ s², i.e. ⌈s^(2/3)⌉ computed in integers to dodge
/// the 8^(2/3) = 3.999… floating-point trap.
fn ceil_two_thirds(s: usize) -> usize {
    let target = (s as u128).pow(2);
    (0..).find(|&k| (k as u128).pow(3) >= target).expect("k = s always satisfies k^3 >= s^2")
}

/// Additive spanner with slack `beta_w_multiplier · W`. Phase 1 keeps each
/// node's ⌈|s|^(2/3)⌉ lightest incident edges (ties towards the smaller
/// neighbor id). Phase 2 rescans pairs of `s` in lexicographic order and
/// patches any pair whose distance exceeds its budget with the whole
/// shortest path from the original graph, until a scan finds no violation.
pub fn additive_spanner(
    inst: &Instance,
    s: &BTreeSet<usize>,
    beta_w_multiplier: f64,
) -> Sparsification {
    assert_seed_set(inst, s);
    let g = inst.graph();
    let slack = beta_w_multiplier * g.max_weight();
    let keep = ceil_two_thirds(s.len());
    let mut edges = BTreeSet::new();
    for u in 0..g.node_count() {
        let mut incident: Vec<usize> = g.neighbors(u).iter().map(|nb| nb.edge).collect();
        incident.sort_by(|&a, &b| {
            let (ea, eb) = (g.edge(a), g.edge(b));
            (ea.weight, ea.other(u)).partial_cmp(&(eb.weight, eb.other(u))).expect("finite")
        });
        edges.extend(incident.into_iter().take(keep));
    }
    let nodes: Vec<usize> = s.iter().copied().collect();
    let full_tables: Vec<_> = nodes.iter().map(|&u| g.dijkstra(u)).collect();
    loop {
        let mut clean = true;
        for (i, &u) in nodes.iter().enumerate() {
            let restricted = g.dijkstra_on(&edges, u);
            for &v in nodes.iter().skip(i + 1) {
                if restricted.dist[v] > full_tables[i].dist[v] + slack {
                    edges.extend(
                        full_tables[i]
                            .path_edges_to(v)
                            .expect("connected instance")
                            .iter()
                            .copied(),
                    );
                    clean = false;
                }
            }
        }
        if clean {
            return Sparsification::from_edges(g, edges);
        }
    }
}

/// Tree-objective pruning: take a minimum spanning forest of `h`, then peel
/// non-terminal leaves until every leaf is a terminal. The result is the
/// union of terminal-to-terminal paths in that forest.
pub fn prune_steiner(inst: &Instance, h: Sparsification) -> Sparsification {
    let g = inst.graph();
    let mut order: Vec<usize> = h.edge_set().iter().copied().collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (g.edge(a), g.edge(b));
        (ea.weight, ea.u, ea.v).partial_cmp(&(eb.weight, eb.u, eb.v)).expect("finite weights")
    });
    let mut dsu = crate::graph::Dsu::new(g.node_count());
    let mut forest = BTreeSet::new();
    for e in order {
        let edge = g.edge(e);
        if dsu.union(edge.u, edge.v) {
            forest.insert(e);
        }
    }
    let mut incident: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); g.node_count()];
    for &e in &forest {
        let edge = g.edge(e);
        incident[edge.u].insert(e);
        incident[edge.v].insert(e);
    }
    let mut queue: Vec<usize> = (0..g.node_count())
        .filter(|&v| incident[v].len() == 1 && !inst.is_terminal(v))
        .collect();
    while let Some(v) = queue.pop() {
        if incident[v].len() != 1 {
            continue;
        }
        let e = *incident[v].iter().next().expect("degree checked");
        let other = g.edge(e).other(v);
        incident[v].clear();
        incident[other].remove(&e);
        forest.remove(&e);
        if incident[other].len() == 1 && !inst.is_terminal(other) {
            queue.push(other);
        }
    }
    Sparsification::from_edges(g, forest)
}

/// Spanner pruning: try removing edges from heaviest to lightest (ties by
/// edge index), keeping a removal iff the predicate still holds. One pass
/// yields a 1-minimal result — an edge kept because its removal broke the
/// predicate can only become more critical as later removals lengthen
/// distances.
pub fn prune_spanner(inst: &Instance, h: Sparsification, validity: &Validity) -> Sparsification {
    let g = inst.graph();
    let mut order: Vec<usize> = h.edge_set().iter().copied().collect();
    order.sort_by(|&a, &b| {
        g.edge(b)
            .weight
            .partial_cmp(&g.edge(a).weight)
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    let mut edges = h.edge_set().clone();
    for e in order {
        edges.remove(&e);
        if !validity.check(g, &edges) {
            edges.insert(e);
        }
    }
    Sparsification::from_edges(g, edges)
}
