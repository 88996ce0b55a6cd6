//! `label`: exact solutions expanded into training samples.

use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use serde::Deserialize;
use sparse_mcts_core::dataset::{load_dataset, save_labeled, LabeledItem};
use sparse_mcts_core::instance::{derive_seed, make_labeled_samples};
use sparse_mcts_core::oracle::{exact, OracleCache, OracleError};

use crate::common::{at_path, load_config, need, resolve_seed, CliError};

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset path.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Per-instance oracle budget in seconds.
    #[arg(long)]
    budget_secs: Option<f64>,
    /// Cap on solution-order permutations expanded per instance.
    #[arg(long)]
    max_perms: Option<usize>,
    /// Oracle result cache; defaults to the output path with a .cache.json
    /// extension.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Root RNG seed (falls back to SPARSE_MCTS_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output labeled-sample path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct LabelConfig {
    dataset: Option<PathBuf>,
    budget_secs: Option<f64>,
    max_perms: Option<usize>,
    cache: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

pub fn run(args: LabelArgs) -> Result<(), CliError> {
    let cfg: LabelConfig = load_config(&args.config)?;
    let dataset = need("--dataset", args.dataset.or(cfg.dataset))?;
    let budget_secs = args.budget_secs.or(cfg.budget_secs).unwrap_or(60.0);
    if !budget_secs.is_finite() || budget_secs <= 0.0 {
        return Err(CliError::Validation(format!(
            "--budget-secs must be positive, got {budget_secs}"
        )));
    }
    let max_perms = args.max_perms.or(cfg.max_perms).unwrap_or(100);
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let out = need("--out", args.out.or(cfg.out))?;
    let cache_path =
        args.cache.or(cfg.cache).unwrap_or_else(|| out.with_extension("cache.json"));

    let instances = at_path(&dataset, load_dataset(&dataset))?;
    let budget = Duration::from_secs_f64(budget_secs);
    let mut cache = at_path(&cache_path, OracleCache::load(&cache_path))?;
    let mut items = Vec::new();
    let mut hits = 0;
    let mut skipped = 0;
    for (index, inst) in instances.iter().enumerate() {
        let solution = match cache.lookup(inst) {
            Some(hit) => {
                hits += 1;
                hit
            }
            None => match exact(inst, Some(budget)) {
                Ok(sp) => {
                    cache.store(inst, &sp);
                    sp
                }
                Err(
                    e @ (OracleError::Timeout { .. }
                    | OracleError::TerminalLimitExceeded { .. }
                    | OracleError::EdgeLimitExceeded { .. }),
                ) => {
                    eprintln!("warning: instance {index} skipped: {e}");
                    skipped += 1;
                    continue;
                }
                Err(other) => return Err(CliError::Validation(other.to_string())),
            },
        };
        let nodes = solution.nodes(inst.graph());
        let samples =
            make_labeled_samples(inst, &nodes, max_perms, derive_seed(seed, "label", index as u64));
        items.push(LabeledItem {
            instance: inst.clone(),
            exact_cost: solution.total_weight(),
            solution_nodes: nodes.into_iter().collect(),
            samples,
        });
    }
    at_path(&cache_path, cache.save(&cache_path))?;
    at_path(&out, save_labeled(&out, &items))?;
    let samples: usize = items.iter().map(|i| i.samples.len()).sum();
    println!(
        "labeled {}/{} instances ({samples} samples, {hits} cache hits, {skipped} skipped) to {}",
        items.len(),
        instances.len(),
        out.display()
    );
    Ok(())
}
