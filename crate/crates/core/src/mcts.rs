//! Monte Carlo tree search over node-selection states, guided by a policy
//! (learned network or uniform) and evaluated with the baseline
//! construct-and-prune sparsifiers.
//!
//! A state is a node set S ⊇ terminals. Each round walks the expanded tree
//! by PUCT scores (ε-random at every depth), expands one child, evaluates
//! it, then simulates up to `sample_size` further policy-sampled additions,
//! evaluating after each and keeping the round's best and worst costs,
//! which are backed up to every node on the walk. The returned result is
//! the global incumbent, seeded with the pruned baseline at the root, so
//! the search never does worse than the baseline.
//!
//! Interpretations fixed here: tree height is counted in edges from the
//! root over expanded nodes only (simulation additions don't count), and
//! `height_fraction` may be 0, in which case no rounds run and the pruned
//! baseline comes back unchanged. Repeated evaluations of the same node
//! set are memoized; the constructions are deterministic, so this is
//! invisible apart from speed.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureExtractor;
use crate::gnn::PolicyModel;
use crate::graph::{Graph, Sparsification};
use crate::instance::{derive_seed, Instance, ProblemKind};
use crate::sparsifiers::{construct, prune_spanner, prune_steiner, Validity};

pub const DEFAULT_C_PUCT: f64 = 1.3;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_HEIGHT_FRACTION: f64 = 0.2;

/// Rounds without an expansion tolerated before giving up; only reachable
/// with degenerate configs (ε = 0 and c_puct = 0), where selection can
/// cycle through already-terminal leaves forever.
const STALL_FACTOR: usize = 16;

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub c_puct: f64,
    /// Probability of a uniform-random action at each step of the
    /// selection walk.
    pub epsilon: f64,
    /// Simulation length; `None` means the instance's node count.
    pub sample_size: Option<usize>,
    /// Tree height budget as a fraction of the node count; 0 disables
    /// search rounds entirely.
    pub height_fraction: f64,
    /// Re-run the policy after every simulated addition (the selected-node
    /// flags change). `false` samples all additions from the priors at the
    /// simulation's start, without replacement.
    pub reinvoke_policy: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c_puct: DEFAULT_C_PUCT,
            epsilon: DEFAULT_EPSILON,
            sample_size: None,
            height_fraction: DEFAULT_HEIGHT_FRACTION,
            reinvoke_policy: true,
            seed: 0,
        }
    }
}

/// What drives node selection: the learned policy, or uniform over the
/// remaining candidates (the random-search baseline).
#[derive(Debug, Clone, Copy)]
pub enum PolicySource<'a> {
    Uniform,
    Network(&'a PolicyModel),
}

impl PolicySource<'_> {
    /// Next-node probabilities given the selected set; zero on selected
    /// nodes, and all zeros when no candidate remains.
    fn priors(&self, graph: &Graph, fx: &FeatureExtractor, set: &BTreeSet<usize>) -> Vec<f64> {
        let n = graph.node_count();
        if set.len() >= n {
            return vec![0.0; n];
        }
        match self {
            PolicySource::Uniform => {
                let p = 1.0 / (n - set.len()) as f64;
                (0..n).map(|v| if set.contains(&v) { 0.0 } else { p }).collect()
            }
            PolicySource::Network(model) => model
                .forward(graph, fx, set)
                .expect("candidates checked above")
                .probs,
        }
    }
}

/// One expanded state: its node set, children by action, per-action visit
/// counts and priors, backed-up best/worst costs, and the best result seen
/// in this subtree.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub set: BTreeSet<usize>,
    /// Action → arena index of the child.
    pub children: BTreeMap<usize, usize>,
    pub visits: BTreeMap<usize, u64>,
    pub priors: Vec<f64>,
    pub best_cost: Option<f64>,
    pub worst_cost: Option<f64>,
    pub incumbent: Option<Sparsification>,
    pub depth: usize,
}

/// Maps a cost into [0,1] against the best (`b`, lowest) and worst (`w`)
/// costs seen: the best maps to 1, the worst to 0. When nothing separates
/// them (b = w) every cost maps to 1.
pub fn normalize_cost(cost: f64, b: f64, w: f64) -> f64 {
    debug_assert!(b <= w);
    if b == w {
        1.0
    } else {
        (cost - w) / (b - w)
    }
}

/// Exploitation-plus-exploration score of `action` at `node`:
/// Q + c·P·sqrt(ΣN)/(1+N). Q normalizes the child's backed-up best cost
/// against the node's own cost range, defaulting to ½ before either side
/// has been evaluated.
pub fn puct_score(
    node: &SearchNode,
    child_best: Option<f64>,
    action: usize,
    c_puct: f64,
) -> f64 {
    let q = match (child_best, node.best_cost, node.worst_cost) {
        (Some(cost), Some(b), Some(w)) => normalize_cost(cost, b, w),
        _ => 0.5,
    };
    let total: u64 = node.visits.values().sum();
    let visits = node.visits.get(&action).copied().unwrap_or(0);
    q + c_puct * node.priors[action] * (total as f64).sqrt() / (1.0 + visits as f64)
}

/// Runs the search and returns the incumbent: the cheapest pruned
/// sparsification found, never worse than the pruned baseline built from
/// the terminals alone.
pub fn search(inst: &Instance, policy: &PolicySource, config: &SearchConfig) -> Sparsification {
    Searcher::new(inst, policy, config).run()
}

enum Pruner {
    Steiner,
    Spanner(Validity),
}

struct Searcher<'a> {
    inst: &'a Instance,
    fx: FeatureExtractor,
    policy: &'a PolicySource<'a>,
    config: &'a SearchConfig,
    pruner: Pruner,
    arena: Vec<SearchNode>,
    rng: ChaCha8Rng,
    /// Deepest expanded node, in edges from the root.
    height: usize,
    /// Expanded non-terminal nodes that still miss a child.
    open: usize,
    sample_size: usize,
    memo: BTreeMap<BTreeSet<usize>, Sparsification>,
}

impl<'a> Searcher<'a> {
    fn new(inst: &'a Instance, policy: &'a PolicySource<'a>, config: &'a SearchConfig) -> Self {
        assert!((0.0..=1.0).contains(&config.epsilon), "epsilon must be in [0,1]");
        assert!(
            (0.0..=1.0).contains(&config.height_fraction),
            "height_fraction must be in [0,1]"
        );
        let n = inst.graph().node_count();
        let fx = FeatureExtractor::new(inst, derive_seed(config.seed, "layout", 0));
        let root_set = inst.terminal_set();
        let priors = policy.priors(inst.graph(), &fx, &root_set);
        let open = usize::from(root_set.len() < n);
        let pruner = match inst.kind() {
            ProblemKind::SteinerTree => Pruner::Steiner,
            _ => Pruner::Spanner(Validity::new(inst)),
        };
        let mut searcher = Searcher {
            inst,
            fx,
            policy,
            config,
            pruner,
            arena: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            height: 0,
            open,
            sample_size: config.sample_size.unwrap_or(n),
            memo: BTreeMap::new(),
        };
        let baseline = searcher.evaluate(&root_set);
        let cost = baseline.total_weight();
        searcher.arena.push(SearchNode {
            set: root_set,
            children: BTreeMap::new(),
            visits: BTreeMap::new(),
            priors,
            best_cost: Some(cost),
            worst_cost: Some(cost),
            incumbent: Some(baseline),
            depth: 0,
        });
        searcher
    }

    fn run(&mut self) -> Sparsification {
        let n = self.inst.graph().node_count();
        let target = (self.config.height_fraction * n as f64).ceil() as usize;
        let mut stall = 0;
        while self.height < target && self.open > 0 && stall < STALL_FACTOR * n {
            if self.round() {
                stall = 0;
            } else {
                stall += 1;
            }
        }
        self.arena[0].incumbent.clone().expect("root incumbent set at init")
    }

    /// Construct-and-prune for the instance's objective, memoized on the
    /// seed set.
    fn evaluate(&mut self, set: &BTreeSet<usize>) -> Sparsification {
        if let Some(hit) = self.memo.get(set) {
            return hit.clone();
        }
        let built = construct(self.inst, set).expect("search states contain the terminals");
        let pruned = match &self.pruner {
            Pruner::Steiner => prune_steiner(self.inst, built),
            Pruner::Spanner(validity) => prune_spanner(self.inst, built, validity),
        };
        self.memo.insert(set.clone(), pruned.clone());
        pruned
    }

    /// One selection → expansion → simulation → backup pass. Returns
    /// whether a node was expanded (walks can also end on terminal leaves).
    fn round(&mut self) -> bool {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut index = 0;
        let (expanded, leaf) = loop {
            match self.select_action(index) {
                None => break (false, index),
                Some(action) => {
                    path.push((index, action));
                    match self.arena[index].children.get(&action) {
                        Some(&child) => index = child,
                        None => break (true, self.expand(index, action)),
                    }
                }
            }
        };
        let (best, worst, result) = self.simulate(leaf);
        for &(node, action) in &path {
            *self.arena[node].visits.entry(action).or_insert(0) += 1;
        }
        for node in path.iter().map(|&(i, _)| i).chain([leaf]) {
            let entry = &mut self.arena[node];
            entry.best_cost = Some(entry.best_cost.map_or(best, |b| b.min(best)));
            entry.worst_cost = Some(entry.worst_cost.map_or(worst, |w| w.max(worst)));
            let improved = entry.incumbent.as_ref().map_or(true, |s| best < s.total_weight());
            if improved {
                entry.incumbent = Some(result.clone());
            }
        }
        expanded
    }

    /// ε-random legal action, otherwise the PUCT argmax (ties: higher
    /// prior, then smaller node id). `None` on terminal states.
    fn select_action(&mut self, index: usize) -> Option<usize> {
        let n = self.inst.graph().node_count();
        let node = &self.arena[index];
        let candidates: Vec<usize> = (0..n).filter(|v| !node.set.contains(v)).collect();
        if candidates.is_empty() {
            return None;
        }
        if self.rng.gen::<f64>() < self.config.epsilon {
            return Some(candidates[self.rng.gen_range(0..candidates.len())]);
        }
        let mut best: Option<(f64, f64, usize)> = None;
        for &action in &candidates {
            let child_best = node
                .children
                .get(&action)
                .and_then(|&child| self.arena[child].best_cost);
            let score = puct_score(node, child_best, action, self.config.c_puct);
            let better = match best {
                None => true,
                Some((s, p, _)) => {
                    score > s || (score == s && node.priors[action] > p)
                }
            };
            if better {
                best = Some((score, node.priors[action], action));
            }
        }
        Some(best.expect("candidates nonempty").2)
    }

    fn expand(&mut self, parent: usize, action: usize) -> usize {
        let n = self.inst.graph().node_count();
        let mut set = self.arena[parent].set.clone();
        set.insert(action);
        let priors = self.policy.priors(self.inst.graph(), &self.fx, &set);
        let depth = self.arena[parent].depth + 1;
        let child = self.arena.len();
        self.arena.push(SearchNode {
            set,
            children: BTreeMap::new(),
            visits: BTreeMap::new(),
            priors,
            best_cost: None,
            worst_cost: None,
            incumbent: None,
            depth,
        });
        self.arena[parent].children.insert(action, child);
        let parent_actions = n - self.arena[parent].set.len();
        if self.arena[parent].children.len() == parent_actions {
            self.open -= 1;
        }
        if self.arena[child].set.len() < n {
            self.open += 1;
        }
        self.height = self.height.max(depth);
        child
    }

    /// Evaluates the leaf's own set, then up to `sample_size` policy-drawn
    /// additions, evaluating after each; returns the round's cost extremes
    /// and the cheapest result.
    fn simulate(&mut self, leaf: usize) -> (f64, f64, Sparsification) {
        let n = self.inst.graph().node_count();
        let mut set = self.arena[leaf].set.clone();
        let mut result = self.evaluate(&set);
        let mut best = result.total_weight();
        let mut worst = best;
        let mut static_priors = self.arena[leaf].priors.clone();
        for _ in 0..self.sample_size {
            if set.len() >= n {
                break;
            }
            let weights = if self.config.reinvoke_policy {
                self.policy.priors(self.inst.graph(), &self.fx, &set)
            } else {
                static_priors.clone()
            };
            let pick = self.sample_candidate(&set, &weights);
            set.insert(pick);
            static_priors[pick] = 0.0;
            let outcome = self.evaluate(&set);
            let cost = outcome.total_weight();
            if cost < best {
                best = cost;
                result = outcome.clone();
            }
            worst = worst.max(cost);
        }
        (best, worst, result)
    }

    /// Draws one unselected node with probability proportional to
    /// `weights`; falls back to uniform when all remaining weights vanish.
    fn sample_candidate(&mut self, set: &BTreeSet<usize>, weights: &[f64]) -> usize {
        let n = self.inst.graph().node_count();
        let candidates: Vec<usize> = (0..n).filter(|v| !set.contains(v)).collect();
        let total: f64 = candidates.iter().map(|&v| weights[v]).sum();
        if total <= 0.0 {
            return candidates[self.rng.gen_range(0..candidates.len())];
        }
        let draw = self.rng.gen::<f64>() * total;
        let mut acc = 0.0;
        for &v in &candidates {
            acc += weights[v];
            if draw < acc {
                return v;
            }
        }
        *candidates.last().expect("candidates nonempty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_geometric;
    use crate::sparsifiers::{construct_pruned, is_valid};

    fn hub_instance() -> Instance {
        let g = Graph::new(
            4,
            &[(0, 1, 5.0), (0, 2, 5.0), (1, 2, 5.0), (0, 3, 3.0), (1, 3, 3.0), (2, 3, 3.0)],
        )
        .unwrap();
        Instance::new(g, vec![0, 1, 2], ProblemKind::SteinerTree, None, None).unwrap()
    }

    #[test]
    fn cost_normalization_endpoints_and_degenerate_rule() {
        assert_eq!(normalize_cost(9.0, 9.0, 10.0), 1.0);
        assert_eq!(normalize_cost(10.0, 9.0, 10.0), 0.0);
        assert_eq!(normalize_cost(9.5, 9.0, 10.0), 0.5);
        assert_eq!(normalize_cost(7.0, 7.0, 7.0), 1.0);
    }

    fn bare_node(set: &[usize], priors: Vec<f64>) -> SearchNode {
        SearchNode {
            set: set.iter().copied().collect(),
            children: BTreeMap::new(),
            visits: BTreeMap::new(),
            priors,
            best_cost: None,
            worst_cost: None,
            incumbent: None,
            depth: 0,
        }
    }

    #[test]
    fn unvisited_nodes_score_on_priors_alone() {
        // No visits: sqrt(0) kills the exploration term, and costs are
        // unset, so every action sits at the neutral Q = 0.5.
        let node = bare_node(&[0], vec![0.0, 0.1, 0.6, 0.3]);
        for action in 1..4 {
            assert_eq!(puct_score(&node, None, action, 1.3), 0.5);
        }
    }

    #[test]
    fn exploration_ratio_follows_priors() {
        let mut node = bare_node(&[0, 1], vec![0.0, 0.0, 0.8, 0.2]);
        node.visits.insert(2, 1);
        node.visits.insert(3, 1);
        node.best_cost = Some(5.0);
        node.worst_cost = Some(9.0);
        // Equal Q for both actions.
        let q = normalize_cost(7.0, 5.0, 9.0);
        let u2 = puct_score(&node, Some(7.0), 2, 1.3) - q;
        let u3 = puct_score(&node, Some(7.0), 3, 1.3) - q;
        assert!((u2 / u3 - 4.0).abs() < 1e-12, "U ratio {} should be 4", u2 / u3);
        let expected = 1.3 * 0.8 * (2.0f64).sqrt() / 2.0;
        assert!((u2 - expected).abs() < 1e-12);
    }

    #[test]
    fn heavily_visited_actions_lose_their_bonus() {
        let mut node = bare_node(&[0], vec![0.0, 1.0, 0.0, 0.0]);
        node.visits.insert(1, u64::pow(10, 12));
        let score = puct_score(&node, None, 1, 1.3);
        assert!((score - 0.5).abs() < 1e-5, "U should vanish, got {score}");
    }

    #[test]
    fn hub_search_recovers_the_cheaper_tree() {
        let inst = hub_instance();
        let start = std::time::Instant::now();
        let result = search(&inst, &PolicySource::Uniform, &SearchConfig::default());
        assert_eq!(result.total_weight(), 9.0);
        assert_eq!(result.edge_set().len(), 3);
        assert!(start.elapsed().as_secs() < 1);
        // Baseline alone costs 10; dominance must still hold.
        let baseline = construct_pruned(&inst, &inst.terminal_set()).unwrap();
        assert_eq!(baseline.total_weight(), 10.0);
    }

    #[test]
    fn zero_height_budget_returns_the_pruned_baseline() {
        let inst = generate_geometric(12, 3).unwrap();
        let config = SearchConfig { height_fraction: 0.0, ..SearchConfig::default() };
        let result = search(&inst, &PolicySource::Uniform, &config);
        let baseline = construct_pruned(&inst, &inst.terminal_set()).unwrap();
        assert_eq!(result.edge_set(), baseline.edge_set());
        assert_eq!(result.total_weight(), baseline.total_weight());
    }

    #[test]
    fn same_seed_same_answer() {
        let inst = generate_geometric(14, 9).unwrap();
        let config = SearchConfig { seed: 42, ..SearchConfig::default() };
        let a = search(&inst, &PolicySource::Uniform, &config);
        let b = search(&inst, &PolicySource::Uniform, &config);
        assert_eq!(a.edge_set(), b.edge_set());
        assert_eq!(a.total_weight().to_bits(), b.total_weight().to_bits());
    }

    #[test]
    fn dominates_baseline_and_stays_valid_on_all_kinds() {
        for (seed, kind) in [
            (11, ProblemKind::SteinerTree),
            (12, ProblemKind::MultiplicativeSpanner { alpha: 2.0 }),
            (13, ProblemKind::AdditiveSpanner { beta_w_multiplier: 2.0 }),
        ] {
            let inst = generate_geometric(12, seed).unwrap().with_kind(kind).unwrap();
            let baseline = construct_pruned(&inst, &inst.terminal_set()).unwrap();
            let config = SearchConfig { seed, ..SearchConfig::default() };
            let result = search(&inst, &PolicySource::Uniform, &config);
            assert!(
                result.total_weight() <= baseline.total_weight(),
                "{kind:?}: {} > baseline {}",
                result.total_weight(),
                baseline.total_weight()
            );
            assert!(is_valid(&inst, result.edge_set()), "{kind:?} output invalid");
        }
    }

    #[test]
    fn root_visits_count_rounds() {
        let inst = generate_geometric(10, 5).unwrap();
        let config = SearchConfig { height_fraction: 1.0, seed: 7, ..SearchConfig::default() };
        let policy = PolicySource::Uniform;
        let mut searcher = Searcher::new(&inst, &policy, &config);
        for k in 1..=20 {
            searcher.round();
            let total: u64 = searcher.arena[0].visits.values().sum();
            assert_eq!(total, k);
        }
        // Children extend the parent set by exactly their action.
        for node in &searcher.arena {
            for (&action, &child) in &node.children {
                let child_set = &searcher.arena[child].set;
                assert!(child_set.contains(&action));
                assert_eq!(child_set.len(), node.set.len() + 1);
                assert!(node.set.is_subset(child_set));
            }
            if let (Some(b), Some(w)) = (node.best_cost, node.worst_cost) {
                assert!(b <= w);
            }
        }
    }

    #[test]
    fn network_policy_and_frozen_priors_both_search() {
        let inst = generate_geometric(10, 21).unwrap();
        let model = PolicyModel::new(16, 2, 4);
        let baseline = construct_pruned(&inst, &inst.terminal_set()).unwrap();
        for reinvoke in [true, false] {
            let config =
                SearchConfig { reinvoke_policy: reinvoke, seed: 3, ..SearchConfig::default() };
            let result = search(&inst, &PolicySource::Network(&model), &config);
            assert!(result.total_weight() <= baseline.total_weight());
            assert!(is_valid(&inst, result.edge_set()));
            let again = search(&inst, &PolicySource::Network(&model), &config);
            assert_eq!(result.edge_set(), again.edge_set());
        }
    }
}
