//! Graph sparsification via policy-guided Monte Carlo tree search.
//!
//! The crate computes three kinds of sparsifications of a weighted graph —
//! Steiner trees, subsetwise multiplicative spanners, and subsetwise additive
//! spanners — by growing a set of "important" nodes `S` from the terminal set
//! and handing `S` to a baseline construction algorithm. Node selection is
//! driven by a Monte Carlo tree search whose priors come from a small
//! message-passing network trained on exact solutions.
//!
//! Module map:
//! - [`graph`]: weighted undirected graphs, shortest paths, spanning trees,
//!   metric closures.
//! - [`instance`]: problem instances, random geometric generation, labeled
//!   training samples.
//! - [`stp`]: SteinLib STP file parsing.
//! - [`dataset`]: versioned JSON persistence for instances and samples.
//! - [`features`]: node/edge feature vectors and spring layouts.
//! - [`sparsifiers`]: the three baseline constructions and both pruners.
//! - [`oracle`]: exact solvers (Steiner DP, spanner branch-and-bound).
//! - [`gnn`]: the policy network, manual gradients, ADAM training.
//! - [`mcts`]: PUCT search over node-addition states.

#![forbid(unsafe_code)]

pub mod dataset;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod instance;
pub mod mcts;
pub mod oracle;
pub mod sparsifiers;
pub mod stp;
