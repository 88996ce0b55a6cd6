//! `gen`: random geometric instance datasets.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use sparse_mcts_core::dataset::save_dataset;
use sparse_mcts_core::instance::{derive_seed, generate_geometric_counted, Instance};

use crate::common::{load_config, need, parse_kind, resolve_seed, CliError};

#[derive(Args, Debug)]
pub struct GenArgs {
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Nodes per instance (terminals are half of them).
    #[arg(long)]
    n: Option<usize>,
    /// Number of instances.
    #[arg(long)]
    count: Option<usize>,
    /// Objective: steiner, mult, or add.
    #[arg(long)]
    kind: Option<String>,
    /// Multiplicative stretch for --kind mult.
    #[arg(long)]
    alpha: Option<f64>,
    /// Additive stretch as a multiple of the maximum edge weight, for
    /// --kind add.
    #[arg(long)]
    beta_w: Option<f64>,
    /// Root RNG seed (falls back to SPARSE_MCTS_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    n: Option<usize>,
    count: Option<usize>,
    kind: Option<String>,
    alpha: Option<f64>,
    beta_w: Option<f64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

pub fn run(args: GenArgs) -> Result<(), CliError> {
    let cfg: GenConfig = load_config(&args.config)?;
    let n = need("--n", args.n.or(cfg.n))?;
    let count = need("--count", args.count.or(cfg.count))?;
    let kind_tag = args.kind.or(cfg.kind).unwrap_or_else(|| "steiner".to_string());
    let alpha = args.alpha.or(cfg.alpha).unwrap_or(2.0);
    let beta_w = args.beta_w.or(cfg.beta_w).unwrap_or(2.0);
    let kind = parse_kind(&kind_tag, alpha, beta_w)?;
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let out = need("--out", args.out.or(cfg.out))?;

    let mut instances: Vec<Instance> = Vec::with_capacity(count);
    let mut retries = 0;
    for index in 0..count {
        let (inst, attempts) = generate_geometric_counted(n, derive_seed(seed, "gen", index as u64))?;
        retries += attempts - 1;
        instances.push(inst.with_kind(kind)?);
    }
    save_dataset(&out, &instances)?;
    println!(
        "wrote {count} instances (n={n}, kind={kind_tag}) to {}; {retries} connectivity retries",
        out.display()
    );
    Ok(())
}
