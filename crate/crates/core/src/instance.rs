//! Problem instances: a connected weighted graph, a terminal set, and the
//! sparsification objective (Steiner tree, multiplicative spanner, or
//! additive spanner), plus the random geometric generator and the
//! permutation-based labeled-sample expansion used for supervision.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{Graph, GraphError};

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("instances need at least two terminals")]
    TooFewTerminals,
    #[error("terminal {node} out of range for {nodes} nodes")]
    TerminalOutOfRange { node: usize, nodes: usize },
    #[error("terminal {node} listed twice")]
    DuplicateTerminal { node: usize },
    #[error("multiplicative stretch must be a finite real ≥ 1, got {alpha}")]
    InvalidAlpha { alpha: f64 },
    #[error("additive stretch multiplier must be a finite nonnegative real, got {value}")]
    InvalidBetaMultiplier { value: f64 },
    #[error("got {got} positions for {expected} nodes")]
    PositionCountMismatch { got: usize, expected: usize },
    #[error("position for node {node} lies outside the unit square")]
    PositionOutOfRange { node: usize },
    #[error("geometric generation needs at least 4 nodes, got {n}")]
    NodeCountTooSmall { n: usize },
    #[error("no connected geometric graph found in {attempts} attempts")]
    GenerationFailed { attempts: usize },
}

/// What the sparsifier must preserve between terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// Connect the terminals at minimum total weight.
    SteinerTree,
    /// Pairwise terminal distances within a multiplicative factor `alpha`.
    MultiplicativeSpanner { alpha: f64 },
    /// Pairwise terminal distances within an additive slack of
    /// `beta_w_multiplier * W`, where `W` is the maximum edge weight.
    AdditiveSpanner { beta_w_multiplier: f64 },
}

impl ProblemKind {
    fn validate(&self) -> Result<(), InstanceError> {
        match *self {
            ProblemKind::SteinerTree => Ok(()),
            ProblemKind::MultiplicativeSpanner { alpha } => {
                if alpha.is_finite() && alpha >= 1.0 {
                    Ok(())
                } else {
                    Err(InstanceError::InvalidAlpha { alpha })
                }
            }
            ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
                if beta_w_multiplier.is_finite() && beta_w_multiplier >= 0.0 {
                    Ok(())
                } else {
                    Err(InstanceError::InvalidBetaMultiplier { value: beta_w_multiplier })
                }
            }
        }
    }
}

/// A validated problem instance. Terminals are stored sorted and distinct;
/// the graph is guaranteed connected.
#[derive(Debug, Clone)]
pub struct Instance {
    graph: Graph,
    terminals: Vec<usize>,
    kind: ProblemKind,
    positions: Option<Vec<(f64, f64)>>,
    seed: Option<u64>,
}

impl Instance {
    pub fn new(
        graph: Graph,
        mut terminals: Vec<usize>,
        kind: ProblemKind,
        positions: Option<Vec<(f64, f64)>>,
        seed: Option<u64>,
    ) -> Result<Self, InstanceError> {
        kind.validate()?;
        if terminals.len() < 2 {
            return Err(InstanceError::TooFewTerminals);
        }
        terminals.sort_unstable();
        for pair in terminals.windows(2) {
            if pair[0] == pair[1] {
                return Err(InstanceError::DuplicateTerminal { node: pair[0] });
            }
        }
        if let Some(&last) = terminals.last() {
            if last >= graph.node_count() {
                return Err(InstanceError::TerminalOutOfRange {
                    node: last,
                    nodes: graph.node_count(),
                });
            }
        }
        if let Some(pos) = &positions {
            if pos.len() != graph.node_count() {
                return Err(InstanceError::PositionCountMismatch {
                    got: pos.len(),
                    expected: graph.node_count(),
                });
            }
            for (node, &(x, y)) in pos.iter().enumerate() {
                if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                    return Err(InstanceError::PositionOutOfRange { node });
                }
            }
        }
        if !graph.is_connected() {
            return Err(GraphError::Disconnected.into());
        }
        Ok(Instance { graph, terminals, kind, positions, seed })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn terminals(&self) -> &[usize] {
        &self.terminals
    }

    pub fn terminal_set(&self) -> BTreeSet<usize> {
        self.terminals.iter().copied().collect()
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.terminals.binary_search(&node).is_ok()
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn positions(&self) -> Option<&[(f64, f64)]> {
        self.positions.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Same instance under a different objective.
    pub fn with_kind(self, kind: ProblemKind) -> Result<Self, InstanceError> {
        kind.validate()?;
        Ok(Instance { kind, ..self })
    }
}

/// One supervision step: the solution nodes committed so far (terminals
/// first, then earlier additions in order) and the node added next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub current_set: Vec<usize>,
    pub target: usize,
}

/// Stable seed derivation for independent random streams. Hash-based so
/// sibling streams (`index` 0, 1, …) never overlap for any root seed.
pub fn derive_seed(root: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update([0u8]);
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Connection radius for the random geometric model on `n` nodes:
/// `sqrt(2·ln n / (π·n))`, the threshold at which such graphs are connected
/// with high probability.
pub fn geometric_radius(n: usize) -> f64 {
    (2.0 * (n as f64).ln() / (std::f64::consts::PI * n as f64)).sqrt()
}

const GENERATION_ATTEMPTS: usize = 1000;

/// Random geometric instance: `n` uniform points in the unit square, edges
/// between points within `geometric_radius(n)`, integer weights uniform in
/// {1,…,10}, and a uniform random half of the nodes as terminals. Resamples
/// with a derived seed until the graph is connected.
pub fn generate_geometric(n: usize, seed: u64) -> Result<Instance, InstanceError> {
    generate_geometric_counted(n, seed).map(|(inst, _)| inst)
}

/// Like [`generate_geometric`], also reporting how many placement attempts
/// the connectivity requirement consumed (1 means the first draw stuck).
pub fn generate_geometric_counted(
    n: usize,
    seed: u64,
) -> Result<(Instance, usize), InstanceError> {
    if n < 4 {
        return Err(InstanceError::NodeCountTooSmall { n });
    }
    let radius = geometric_radius(n);
    for attempt in 0..GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "geometric", attempt as u64));
        let positions: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let (dx, dy) = (positions[u].0 - positions[v].0, positions[u].1 - positions[v].1);
                if (dx * dx + dy * dy).sqrt() <= radius {
                    edges.push((u, v, rng.gen_range(1..=10) as f64));
                }
            }
        }
        let graph = match Graph::new(n, &edges) {
            Ok(g) if g.is_connected() => g,
            _ => continue,
        };
        let mut terminals = rand::seq::index::sample(&mut rng, n, n / 2).into_vec();
        terminals.sort_unstable();
        let inst =
            Instance::new(graph, terminals, ProblemKind::SteinerTree, Some(positions), Some(seed))?;
        return Ok((inst, attempt + 1));
    }
    Err(InstanceError::GenerationFailed { attempts: GENERATION_ATTEMPTS })
}

/// Expands one solved instance into supervision samples: up to `max_perms`
/// distinct orderings of the non-terminal solution nodes, one sample per
/// prefix of each ordering. Orderings are enumerated lexicographically when
/// few enough, otherwise sampled uniformly without repetition.
pub fn make_labeled_samples(
    inst: &Instance,
    optimal_nodes: &BTreeSet<usize>,
    max_perms: usize,
    seed: u64,
) -> Vec<LabeledSample> {
    assert!(
        inst.terminals().iter().all(|t| optimal_nodes.contains(t)),
        "solution node set must contain every terminal"
    );
    let extras: Vec<usize> =
        optimal_nodes.iter().copied().filter(|v| !inst.is_terminal(*v)).collect();
    if extras.is_empty() || max_perms == 0 {
        return Vec::new();
    }
    let perms = if count_at_most(extras.len(), max_perms) {
        lexicographic_permutations(&extras)
    } else {
        sample_distinct_permutations(&extras, max_perms, seed)
    };
    let mut samples = Vec::with_capacity(perms.len() * extras.len());
    for perm in &perms {
        let mut current: Vec<usize> = inst.terminals().to_vec();
        for &target in perm {
            samples.push(LabeledSample { current_set: current.clone(), target });
            current.push(target);
        }
    }
    samples
}

/// True iff `k!` ≤ `cap`, without overflowing.
fn count_at_most(k: usize, cap: usize) -> bool {
    let mut f = 1u128;
    for i in 1..=k as u128 {
        f = f.saturating_mul(i);
        if f > cap as u128 {
            return false;
        }
    }
    true
}

fn lexicographic_permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut current = items.to_vec();
    current.sort_unstable();
    let mut out = Vec::new();
    loop {
        out.push(current.clone());
        if !next_permutation(&mut current) {
            return out;
        }
    }
}

/// In-place lexicographic successor; false once `items` is the last one.
fn next_permutation(items: &mut [usize]) -> bool {
    let n = items.len();
    if n < 2 {
        return false;
    }
    let Some(pivot) = (0..n - 1).rev().find(|&i| items[i] < items[i + 1]) else {
        return false;
    };
    let swap = (pivot + 1..n).rev().find(|&j| items[j] > items[pivot]).unwrap();
    items.swap(pivot, swap);
    items[pivot + 1..].reverse();
    true
}

fn sample_distinct_permutations(items: &[usize], want: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(want);
    while out.len() < want {
        let mut perm = items.to_vec();
        perm.shuffle(&mut rng);
        if seen.insert(perm.clone()) {
            out.push(perm);
        }
    }
    out
}
