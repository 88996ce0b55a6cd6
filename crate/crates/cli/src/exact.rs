//! `exact`: run only the exact oracle over a dataset.
//!
//! CSV columns: instance, n, kind, stretch, exact_cost, edge_count, edges
//! (edges as semicolon-joined `u-v` endpoint pairs; cost cells empty when
//! the budget or size caps preempt an instance).

use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use serde::Deserialize;
use sparse_mcts_core::dataset::load_dataset;
use sparse_mcts_core::instance::ProblemKind;
use sparse_mcts_core::oracle::{
    exact, exact_spanner, Objective, OracleCache, OracleError,
};

use crate::common::{at_path, kind_columns, load_config, need, CliError};
use crate::csvio::{float_cell, write_csv};

#[derive(Args, Debug)]
pub struct ExactArgs {
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset path.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Per-instance budget in seconds.
    #[arg(long)]
    budget_secs: Option<f64>,
    /// weight (default) or edges; edges applies to spanner instances only.
    #[arg(long)]
    objective: Option<String>,
    /// Oracle result cache (weight objective only).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExactConfig {
    dataset: Option<PathBuf>,
    budget_secs: Option<f64>,
    objective: Option<String>,
    cache: Option<PathBuf>,
    out: Option<PathBuf>,
}

pub fn run(args: ExactArgs) -> Result<(), CliError> {
    let cfg: ExactConfig = load_config(&args.config)?;
    let dataset = need("--dataset", args.dataset.or(cfg.dataset))?;
    let out = need("--out", args.out.or(cfg.out))?;
    let budget_secs = args.budget_secs.or(cfg.budget_secs).unwrap_or(60.0);
    if !budget_secs.is_finite() || budget_secs <= 0.0 {
        return Err(CliError::Validation(format!(
            "--budget-secs must be positive, got {budget_secs}"
        )));
    }
    let budget = Duration::from_secs_f64(budget_secs);
    let objective_tag =
        args.objective.or(cfg.objective).unwrap_or_else(|| "weight".to_string());
    let objective = match objective_tag.as_str() {
        "weight" => Objective::TotalWeight,
        "edges" => Objective::EdgeCount,
        other => {
            return Err(CliError::Validation(format!(
                "--objective must be weight or edges (got {other:?})"
            )))
        }
    };
    let cache_path = args.cache.or(cfg.cache);

    let instances = at_path(&dataset, load_dataset(&dataset))?;
    if matches!(objective, Objective::EdgeCount) {
        if let Some(index) =
            instances.iter().position(|i| i.kind() == ProblemKind::SteinerTree)
        {
            return Err(CliError::Validation(format!(
                "--objective edges applies to spanner instances only (instance {index} is steiner)"
            )));
        }
    }
    // Cached solutions minimize weight; reuse them only for that objective.
    let mut cache = match (&cache_path, objective) {
        (Some(path), Objective::TotalWeight) => Some(at_path(path, OracleCache::load(path))?),
        _ => None,
    };

    let mut rows = Vec::with_capacity(instances.len());
    let mut solved = 0;
    for (index, inst) in instances.iter().enumerate() {
        let (kind, stretch) = kind_columns(inst.kind());
        let mut row = vec![
            index.to_string(),
            inst.graph().node_count().to_string(),
            kind.to_string(),
            stretch,
            String::new(),
            String::new(),
            String::new(),
        ];
        let cached = cache.as_ref().and_then(|c| c.lookup(inst));
        let outcome = match cached {
            Some(hit) => Ok(hit),
            None => match objective {
                Objective::TotalWeight => exact(inst, Some(budget)),
                Objective::EdgeCount => exact_spanner(inst, Objective::EdgeCount, Some(budget)),
            },
        };
        match outcome {
            Ok(solution) => {
                if let Some(c) = cache.as_mut() {
                    c.store(inst, &solution);
                }
                let edges: Vec<String> = solution
                    .edge_set()
                    .iter()
                    .map(|&e| {
                        let edge = inst.graph().edge(e);
                        format!("{}-{}", edge.u, edge.v)
                    })
                    .collect();
                row[4] = float_cell(solution.total_weight());
                row[5] = solution.edge_count().to_string();
                row[6] = edges.join(";");
                solved += 1;
            }
            Err(
                e @ (OracleError::Timeout { .. }
                | OracleError::TerminalLimitExceeded { .. }
                | OracleError::EdgeLimitExceeded { .. }),
            ) => eprintln!("warning: instance {index} unsolved: {e}"),
            Err(other) => return Err(CliError::Validation(other.to_string())),
        }
        rows.push(row);
    }
    if let (Some(path), Some(c)) = (&cache_path, &cache) {
        at_path(path, c.save(path))?;
    }
    write_csv(
        &out,
        &["instance", "n", "kind", "stretch", "exact_cost", "edge_count", "edges"],
        &rows,
    )?;
    println!("solved {solved}/{} instances exactly to {}", instances.len(), out.display());
    Ok(())
}
