//! Node and edge feature extraction for the selection network, plus the
//! force-directed layout used when instances carry no coordinates.
//!
//! Each node gets 12 values: position (x, y), the terminal flag, the
//! in-solution flag, and eight structural descriptors — degree/(n−1),
//! clustering coefficient, betweenness, closeness, eigenvector centrality,
//! PageRank, Katz centrality, and core number/(n−1). Each edge gets 2:
//! weight/W and shared-neighbor count/(n−2). Everything is scaled into
//! [0, 1]; descriptors without a natural scale are divided by their maximum
//! over the graph (left at zero when that maximum is zero).
//!
//! Descriptors are computed on the unweighted topology, except closeness,
//! which uses weighted shortest-path distances. Only the in-solution flag
//! depends on the growing node set, so the other 11 entries are computed
//! once per instance and reused.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;
use crate::instance::Instance;

pub const NODE_FEATURE_DIM: usize = 12;
pub const EDGE_FEATURE_DIM: usize = 2;

/// Index of the in-solution flag, the one entry that varies with the
/// current node set.
pub const ADDED_FLAG: usize = 3;

/// Affinely maps points onto the unit square, one axis at a time. An axis
/// with no spread collapses to 0.5.
pub fn normalize_unit_square(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let axis = |pick: fn(&(f64, f64)) -> f64| {
        let lo = points.iter().map(pick).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(pick).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    let (x0, xr) = axis(|p| p.0);
    let (y0, yr) = axis(|p| p.1);
    let map = |v: f64, lo: f64, range: f64| if range > 0.0 { (v - lo) / range } else { 0.5 };
    points.iter().map(|&(x, y)| (map(x, x0, xr), map(y, y0, yr))).collect()
}

const LAYOUT_ITERATIONS: usize = 200;

/// Fruchterman–Reingold layout: random start, 200 rounds of pairwise
/// repulsion and edge attraction under a linearly cooling step cap, then
/// normalization onto the unit square. Deterministic given the seed.
pub fn spring_layout(g: &Graph, seed: u64) -> Vec<(f64, f64)> {
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![(0.5, 0.5)];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let k = (1.0 / n as f64).sqrt();
    for round in 0..LAYOUT_ITERATIONS {
        let temperature = 0.1 * (1.0 - round as f64 / LAYOUT_ITERATIONS as f64);
        let mut disp = vec![(0.0f64, 0.0f64); n];
        for u in 0..n {
            for v in (u + 1)..n {
                let (dx, dy) = (pos[u].0 - pos[v].0, pos[u].1 - pos[v].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-9);
                let f = k * k / (d * d);
                disp[u].0 += dx * f;
                disp[u].1 += dy * f;
                disp[v].0 -= dx * f;
                disp[v].1 -= dy * f;
            }
        }
        for e in g.edges() {
            let (dx, dy) = (pos[e.u].0 - pos[e.v].0, pos[e.u].1 - pos[e.v].1);
            let d = (dx * dx + dy * dy).sqrt().max(1e-9);
            let f = d / k;
            disp[e.u].0 -= dx * f;
            disp[e.u].1 -= dy * f;
            disp[e.v].0 += dx * f;
            disp[e.v].1 += dy * f;
        }
        for u in 0..n {
            let (dx, dy) = disp[u];
            let d = (dx * dx + dy * dy).sqrt();
            if d > 1e-12 {
                let step = d.min(temperature);
                pos[u].0 += dx / d * step;
                pos[u].1 += dy / d * step;
            }
        }
    }
    normalize_unit_square(&pos)
}

/// Stored coordinates when the instance has them, spring layout otherwise.
pub fn layout_for(inst: &Instance, seed: u64) -> Vec<(f64, f64)> {
    match inst.positions() {
        Some(pos) => pos.to_vec(),
        None => spring_layout(inst.graph(), seed),
    }
}

/// Per-instance feature tables. The node table is completed per query by
/// filling the in-solution flag.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    node_static: Vec<[f64; NODE_FEATURE_DIM]>,
    edge_features: Vec<[f64; EDGE_FEATURE_DIM]>,
    layout: Vec<(f64, f64)>,
}

impl FeatureExtractor {
    pub fn new(inst: &Instance, layout_seed: u64) -> Self {
        let g = inst.graph();
        let n = g.node_count();
        let layout = layout_for(inst, layout_seed);
        let degree_scale = if n > 1 { 1.0 / (n as f64 - 1.0) } else { 0.0 };
        let clustering = clustering_coefficients(g);
        let betweenness = max_normalized(betweenness(g));
        let closeness = max_normalized(weighted_closeness(g));
        let eigen = max_normalized(eigenvector_centrality(g));
        let pagerank = max_normalized(pagerank(g));
        let katz = max_normalized(katz_centrality(g));
        let core = core_numbers(g);
        let node_static = (0..n)
            .map(|u| {
                [
                    layout[u].0,
                    layout[u].1,
                    if inst.is_terminal(u) { 1.0 } else { 0.0 },
                    0.0,
                    g.degree(u) as f64 * degree_scale,
                    clustering[u],
                    betweenness[u],
                    closeness[u],
                    eigen[u],
                    pagerank[u],
                    katz[u],
                    core[u] as f64 * degree_scale,
                ]
            })
            .collect();
        let neighbor_sets: Vec<BTreeSet<usize>> = (0..n)
            .map(|u| g.neighbors(u).iter().map(|nb| nb.node).collect())
            .collect();
        let w_max = g.max_weight();
        let shared_scale = if n > 2 { 1.0 / (n as f64 - 2.0) } else { 0.0 };
        let edge_features = g
            .edges()
            .iter()
            .map(|e| {
                let shared = neighbor_sets[e.u].intersection(&neighbor_sets[e.v]).count();
                [e.weight / w_max, shared as f64 * shared_scale]
            })
            .collect();
        FeatureExtractor { node_static, edge_features, layout }
    }

    /// Node feature table with the in-solution flag set for `current`.
    pub fn node_features(&self, current: &BTreeSet<usize>) -> Vec<[f64; NODE_FEATURE_DIM]> {
        let mut table = self.node_static.clone();
        for &u in current {
            table[u][ADDED_FLAG] = 1.0;
        }
        table
    }

    pub fn edge_features(&self) -> &[[f64; EDGE_FEATURE_DIM]] {
        &self.edge_features
    }

    pub fn layout(&self) -> &[(f64, f64)] {
        &self.layout
    }
}

fn max_normalized(mut values: Vec<f64>) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    values
}

/// Fraction of a node's neighbor pairs that are themselves adjacent; 0 for
/// degree below 2.
fn clustering_coefficients(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let sets: Vec<BTreeSet<usize>> =
        (0..n).map(|u| g.neighbors(u).iter().map(|nb| nb.node).collect()).collect();
    (0..n)
        .map(|u| {
            let d = sets[u].len();
            if d < 2 {
                return 0.0;
            }
            let mut links = 0;
            for &v in &sets[u] {
                for &w in sets[u].range((v + 1)..) {
                    if sets[v].contains(&w) {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (d * (d - 1)) as f64
        })
        .collect()
}

/// Brandes accumulation of shortest-path dependencies over the unweighted
/// topology (raw pair counts; callers rescale).
fn betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        let mut order = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        sigma[s] = 1.0;
        dist[s] = 0;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for nb in g.neighbors(u) {
                let v = nb.node;
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if dist[v] == dist[u] + 1 {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        for &v in order.iter().rev() {
            for &p in &preds[v] {
                delta[p] += sigma[p] / sigma[v] * (1.0 + delta[v]);
            }
            if v != s {
                bc[v] += delta[v];
            }
        }
    }
    bc
}

/// (n−1) / (sum of weighted shortest-path distances to all other nodes).
fn weighted_closeness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|u| {
            let total: f64 = g.dijkstra(u).dist.iter().sum();
            if total > 0.0 && total.is_finite() {
                (n as f64 - 1.0) / total
            } else {
                0.0
            }
        })
        .collect()
}

/// Dominant-eigenvector direction of the adjacency matrix via shifted power
/// iteration (the +I shift keeps bipartite graphs from oscillating).
/// Scaled to a unit maximum entry. Also returns nothing about the
/// eigenvalue; see `katz_centrality` for the spectral bound it needs.
fn eigenvector_centrality(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..1000 {
        let mut next = x.clone();
        for e in g.edges() {
            next[e.u] += x[e.v];
            next[e.v] += x[e.u];
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut next {
            *v /= norm;
        }
        let change =
            x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    x
}

/// Largest adjacency eigenvalue, estimated from the converged eigenvector
/// by a Rayleigh quotient.
fn spectral_radius(g: &Graph, eigvec: &[f64]) -> f64 {
    let mut ax = vec![0.0; eigvec.len()];
    for e in g.edges() {
        ax[e.u] += eigvec[e.v];
        ax[e.v] += eigvec[e.u];
    }
    let num: f64 = eigvec.iter().zip(&ax).map(|(a, b)| a * b).sum();
    let den: f64 = eigvec.iter().map(|v| v * v).sum();
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Random-walk stationary weights with damping 0.85 and uniform teleport.
fn pagerank(g: &Graph) -> Vec<f64> {
    const DAMPING: f64 = 0.85;
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    let mut pr = vec![1.0 / n as f64; n];
    let teleport = (1.0 - DAMPING) / n as f64;
    for _ in 0..1000 {
        let mut next = vec![teleport; n];
        for u in 0..n {
            let deg = g.degree(u);
            if deg == 0 {
                // An isolated node's mass teleports uniformly.
                for slot in next.iter_mut() {
                    *slot += DAMPING * pr[u] / n as f64;
                }
                continue;
            }
            let share = DAMPING * pr[u] / deg as f64;
            for nb in g.neighbors(u) {
                next[nb.node] += share;
            }
        }
        let change: f64 = pr.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if change < 1e-12 {
            break;
        }
    }
    pr
}

/// Katz centrality `x = Σ_k (αA)^k 1`, with the attenuation set per graph to
/// 0.9 / λ_max so the series always converges regardless of density.
fn katz_centrality(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return vec![0.0; n];
    }
    let radius = spectral_radius(g, &eigenvector_centrality(g));
    let alpha = 0.9 / radius.max(1e-9);
    let mut x = vec![1.0; n];
    for _ in 0..1000 {
        let mut next = vec![1.0; n];
        for e in g.edges() {
            next[e.u] += alpha * x[e.v];
            next[e.v] += alpha * x[e.u];
        }
        let change =
            x.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    x
}

/// Degeneracy ordering: each node's core number is its degree at removal,
/// running-maxed over the peel.
fn core_numbers(g: &Graph) -> Vec<usize> {
    let n = g.node_count();
    let mut deg: Vec<usize> = (0..n).map(|u| g.degree(u)).collect();
    let mut removed = vec![false; n];
    let mut core = vec![0; n];
    let mut level = 0;
    for _ in 0..n {
        let u = (0..n)
            .filter(|&u| !removed[u])
            .min_by_key(|&u| (deg[u], u))
            .expect("one unremoved node per round");
        level = level.max(deg[u]);
        core[u] = level;
        removed[u] = true;
        for nb in g.neighbors(u) {
            if !removed[nb.node] {
                deg[nb.node] -= 1;
            }
        }
    }
    core
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_geometric, ProblemKind};

    fn star5() -> Graph {
        Graph::new(5, &[(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0), (0, 4, 1.0)]).unwrap()
    }

    fn instance(g: Graph, terminals: Vec<usize>) -> Instance {
        Instance::new(g, terminals, ProblemKind::SteinerTree, None, None).unwrap()
    }

    #[test]
    fn star_center_descriptors() {
        let inst = instance(star5(), vec![1, 2]);
        let fx = FeatureExtractor::new(&inst, 0);
        let table = fx.node_features(&inst.terminal_set());
        let center = table[0];
        assert_eq!(center[4], 1.0, "degree 4 over n-1 = 4");
        assert_eq!(center[5], 0.0, "no neighbor pairs adjacent");
        assert_eq!(center[6], 1.0, "betweenness maximum");
        assert_eq!(table[1][6], 0.0, "leaves lie on no shortest paths");
        assert_eq!(center[8], 1.0, "eigenvector maximum at the hub");
        assert!((table[1][8] - 0.5).abs() < 1e-9, "star leaf eigenvector is half the hub");
        assert_eq!(center[9], 1.0, "PageRank maximum at the hub");
        assert_eq!(center[10], 1.0, "Katz maximum at the hub");
    }

    #[test]
    fn flags_follow_terminals_and_current_set() {
        let inst = instance(star5(), vec![1, 2]);
        let fx = FeatureExtractor::new(&inst, 0);
        let mut current = inst.terminal_set();
        current.insert(0);
        let table = fx.node_features(&current);
        assert_eq!((table[1][2], table[1][ADDED_FLAG]), (1.0, 1.0), "terminal in S");
        assert_eq!((table[0][2], table[0][ADDED_FLAG]), (0.0, 1.0), "added non-terminal");
        assert_eq!((table[3][2], table[3][ADDED_FLAG]), (0.0, 0.0), "untouched node");
    }

    #[test]
    fn triangle_clustering_and_zero_betweenness_guard() {
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let inst = instance(g, vec![0, 1]);
        let fx = FeatureExtractor::new(&inst, 0);
        for row in fx.node_features(&inst.terminal_set()) {
            assert_eq!(row[5], 1.0, "triangle nodes are fully clustered");
            assert_eq!(row[6], 0.0, "no betweenness anywhere stays zero after the guard");
        }
    }

    #[test]
    fn weighted_closeness_uses_distances_not_hops() {
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 3.0)]).unwrap();
        let raw = weighted_closeness(&g);
        assert!((raw[0] - 2.0 / 5.0).abs() < 1e-12);
        assert!((raw[1] - 2.0 / 4.0).abs() < 1e-12);
        assert!((raw[2] - 2.0 / 7.0).abs() < 1e-12);
        let inst = instance(g, vec![0, 2]);
        let fx = FeatureExtractor::new(&inst, 0);
        let table = fx.node_features(&inst.terminal_set());
        assert_eq!(table[1][7], 1.0);
        assert!((table[0][7] - 0.8).abs() < 1e-12);
        assert!((table[2][7] - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn core_numbers_separate_triangle_from_pendant() {
        let g = Graph::new(4, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        assert_eq!(core_numbers(&g), vec![2, 2, 2, 1]);
    }

    #[test]
    fn edge_features_scale_weight_and_shared_neighbors() {
        let g = Graph::new(
            4,
            &[(0, 1, 2.0), (1, 2, 4.0), (0, 2, 1.0), (2, 3, 2.0)],
        )
        .unwrap();
        let inst = instance(g, vec![0, 3]);
        let fx = FeatureExtractor::new(&inst, 0);
        let ef = fx.edge_features();
        assert_eq!(ef[1][0], 1.0, "heaviest edge");
        assert_eq!(ef[0][0], 0.5);
        assert_eq!(ef[0][1], 0.5, "edge 0-1 shares node 2 out of n-2=2");
        assert_eq!(ef[3][1], 0.0, "pendant edge shares nothing");
    }

    #[test]
    fn k3_edge_shares_the_third_node_fully() {
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let inst = instance(g, vec![0, 1]);
        let fx = FeatureExtractor::new(&inst, 0);
        for row in fx.edge_features() {
            assert_eq!(row, &[1.0, 1.0]);
        }
    }

    #[test]
    fn all_features_bounded_on_generated_instances() {
        for seed in 0..4 {
            let inst = generate_geometric(16, seed).unwrap();
            let fx = FeatureExtractor::new(&inst, seed);
            let mut current = inst.terminal_set();
            current.insert(
                (0..16).find(|v| !inst.is_terminal(*v)).expect("a non-terminal exists"),
            );
            for row in fx.node_features(&current) {
                assert_eq!(row.len(), NODE_FEATURE_DIM);
                for v in row {
                    assert!((0.0..=1.0).contains(&v), "node feature {v} out of range");
                }
            }
            for row in fx.edge_features() {
                assert_eq!(row.len(), EDGE_FEATURE_DIM);
                for &v in row {
                    assert!((0.0..=1.0).contains(&v), "edge feature {v} out of range");
                }
            }
        }
    }

    #[test]
    fn spring_layout_is_deterministic_and_bounded() {
        let g = star5();
        let a = spring_layout(&g, 9);
        assert_eq!(a, spring_layout(&g, 9));
        assert_ne!(a, spring_layout(&g, 10));
        for &(x, y) in &a {
            assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn spring_layout_orders_a_path() {
        let g = Graph::new(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let pos = spring_layout(&g, 3);
        // Pick the axis the path stretched along; the middle node must sit
        // between the endpoints there.
        let (a, m, b) = (pos[0], pos[1], pos[2]);
        let spread_x = (a.0 - b.0).abs();
        let spread_y = (a.1 - b.1).abs();
        let (lo, mid, hi) = if spread_x >= spread_y {
            (a.0.min(b.0), m.0, a.0.max(b.0))
        } else {
            (a.1.min(b.1), m.1, a.1.max(b.1))
        };
        assert!(lo < mid && mid < hi, "midpoint {mid} outside ({lo}, {hi})");
    }

    #[test]
    fn stored_positions_bypass_the_embedder() {
        let inst = generate_geometric(10, 5).unwrap();
        assert_eq!(layout_for(&inst, 77), inst.positions().unwrap());
        let fx = FeatureExtractor::new(&inst, 77);
        assert_eq!(fx.layout(), inst.positions().unwrap());
    }
}
