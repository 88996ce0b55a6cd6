//! `solve`: baseline, search, and (optionally) exact costs per instance.
//!
//! Results CSV columns: instance, n, kind, stretch, baseline_cost,
//! mcts_cost, exact_cost (exact empty unless --with-exact succeeded within
//! budget). Wall-clock goes to a separate CSV via --times so the results
//! file stays byte-reproducible.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;
use sparse_mcts_core::dataset::load_dataset;
use sparse_mcts_core::gnn::PolicyModel;
use sparse_mcts_core::instance::{derive_seed, Instance};
use sparse_mcts_core::mcts::{search, PolicySource, SearchConfig};
use sparse_mcts_core::oracle::{exact, OracleError};
use sparse_mcts_core::sparsifiers::construct_pruned;

use crate::common::{at_path, kind_columns, load_config, need, resolve_seed, CliError};
use crate::csvio::{float_cell, write_csv};

pub const RESULT_COLUMNS: [&str; 7] =
    ["instance", "n", "kind", "stretch", "baseline_cost", "mcts_cost", "exact_cost"];
const TIME_COLUMNS: [&str; 4] = ["instance", "baseline_secs", "mcts_secs", "exact_secs"];

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input dataset path.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Trained model for --policy gnn.
    #[arg(long)]
    model: Option<PathBuf>,
    /// gnn or random; defaults to gnn when --model is given.
    #[arg(long)]
    policy: Option<String>,
    /// Exploration constant in the node-selection score.
    #[arg(long)]
    c_puct: Option<f64>,
    /// Probability of a uniformly random action at each tree depth.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Simulation length; defaults to the instance's node count.
    #[arg(long)]
    sample_size: Option<usize>,
    /// Tree-height budget as a fraction of the node count.
    #[arg(long)]
    height_fraction: Option<f64>,
    /// Sample all simulation additions from the priors at the simulation's
    /// start instead of re-running the policy each step.
    #[arg(long)]
    no_reinvoke: bool,
    /// Also run the exact oracle per instance.
    #[arg(long)]
    with_exact: bool,
    /// Per-instance oracle budget in seconds.
    #[arg(long)]
    oracle_budget_secs: Option<f64>,
    /// Worker threads for instance-level parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Root RNG seed (falls back to SPARSE_MCTS_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional wall-clock CSV path.
    #[arg(long)]
    times: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolveConfig {
    dataset: Option<PathBuf>,
    model: Option<PathBuf>,
    policy: Option<String>,
    c_puct: Option<f64>,
    epsilon: Option<f64>,
    sample_size: Option<usize>,
    height_fraction: Option<f64>,
    no_reinvoke: Option<bool>,
    with_exact: Option<bool>,
    oracle_budget_secs: Option<f64>,
    jobs: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    times: Option<PathBuf>,
}

struct Outcome {
    index: usize,
    row: Vec<String>,
    times: Vec<String>,
    warning: Option<String>,
}

pub fn run(args: SolveArgs) -> Result<(), CliError> {
    let cfg: SolveConfig = load_config(&args.config)?;
    let dataset = need("--dataset", args.dataset.or(cfg.dataset))?;
    let out = need("--out", args.out.or(cfg.out))?;
    let times_path = args.times.or(cfg.times);
    let model_path = args.model.or(cfg.model);
    let policy_tag = args
        .policy
        .or(cfg.policy)
        .unwrap_or_else(|| if model_path.is_some() { "gnn" } else { "random" }.to_string());
    let model = match policy_tag.as_str() {
        "random" => None,
        "gnn" => {
            let path = model_path.ok_or_else(|| {
                CliError::Validation("--policy gnn needs --model".to_string())
            })?;
            Some(at_path(&path, PolicyModel::load(&path))?)
        }
        other => {
            return Err(CliError::Validation(format!(
                "--policy must be gnn or random (got {other:?})"
            )))
        }
    };
    let with_exact = args.with_exact || cfg.with_exact.unwrap_or(false);
    let budget_secs = args.oracle_budget_secs.or(cfg.oracle_budget_secs).unwrap_or(60.0);
    if !budget_secs.is_finite() || budget_secs <= 0.0 {
        return Err(CliError::Validation(format!(
            "--oracle-budget-secs must be positive, got {budget_secs}"
        )));
    }
    let budget = Duration::from_secs_f64(budget_secs);
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let base = SearchConfig {
        c_puct: args.c_puct.or(cfg.c_puct).unwrap_or(SearchConfig::default().c_puct),
        epsilon: args.epsilon.or(cfg.epsilon).unwrap_or(SearchConfig::default().epsilon),
        sample_size: args.sample_size.or(cfg.sample_size),
        height_fraction: args
            .height_fraction
            .or(cfg.height_fraction)
            .unwrap_or(SearchConfig::default().height_fraction),
        reinvoke_policy: !(args.no_reinvoke || cfg.no_reinvoke.unwrap_or(false)),
        seed,
    };
    if !(0.0..=1.0).contains(&base.epsilon) {
        return Err(CliError::Validation(format!(
            "--epsilon must be in [0,1], got {}",
            base.epsilon
        )));
    }
    if !(0.0..=1.0).contains(&base.height_fraction) {
        return Err(CliError::Validation(format!(
            "--height-fraction must be in [0,1], got {}",
            base.height_fraction
        )));
    }

    let instances = at_path(&dataset, load_dataset(&dataset))?;
    let worker = |(index, inst): (usize, &Instance)| -> Result<Outcome, CliError> {
        solve_one(index, inst, model.as_ref(), &base, with_exact, budget)
    };
    let mut outcomes: Vec<Outcome> = match args.jobs.or(cfg.jobs) {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| CliError::Validation(format!("--jobs: {e}")))?;
            pool.install(|| {
                instances.par_iter().enumerate().map(worker).collect::<Result<Vec<_>, _>>()
            })?
        }
        None => instances.iter().enumerate().map(worker).collect::<Result<Vec<_>, _>>()?,
    };
    outcomes.sort_by_key(|o| o.index);

    for outcome in &outcomes {
        if let Some(warning) = &outcome.warning {
            eprintln!("warning: {warning}");
        }
    }
    let rows: Vec<Vec<String>> = outcomes.iter().map(|o| o.row.clone()).collect();
    write_csv(&out, &RESULT_COLUMNS, &rows)?;
    if let Some(path) = times_path {
        let rows: Vec<Vec<String>> = outcomes.iter().map(|o| o.times.clone()).collect();
        write_csv(&path, &TIME_COLUMNS, &rows)?;
    }
    println!(
        "solved {} instances (policy={policy_tag}, exact={}) to {}",
        outcomes.len(),
        if with_exact { "on" } else { "off" },
        out.display()
    );
    Ok(())
}

fn solve_one(
    index: usize,
    inst: &Instance,
    model: Option<&PolicyModel>,
    base: &SearchConfig,
    with_exact: bool,
    budget: Duration,
) -> Result<Outcome, CliError> {
    let policy = match model {
        Some(m) => PolicySource::Network(m),
        None => PolicySource::Uniform,
    };
    let config = SearchConfig { seed: derive_seed(base.seed, "solve", index as u64), ..*base };

    let start = Instant::now();
    let baseline = construct_pruned(inst, &inst.terminal_set())?;
    let baseline_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let found = search(inst, &policy, &config);
    let mcts_secs = start.elapsed().as_secs_f64();

    let mut warning = None;
    let mut exact_cell = String::new();
    let mut exact_secs_cell = String::new();
    if with_exact {
        let start = Instant::now();
        match exact(inst, Some(budget)) {
            Ok(solution) => {
                exact_cell = float_cell(solution.total_weight());
                exact_secs_cell = format!("{:.6}", start.elapsed().as_secs_f64());
            }
            Err(
                e @ (OracleError::Timeout { .. }
                | OracleError::TerminalLimitExceeded { .. }
                | OracleError::EdgeLimitExceeded { .. }),
            ) => warning = Some(format!("instance {index}: exact oracle skipped: {e}")),
            Err(other) => return Err(CliError::Validation(other.to_string())),
        }
    }

    let (kind, stretch) = kind_columns(inst.kind());
    Ok(Outcome {
        index,
        row: vec![
            index.to_string(),
            inst.graph().node_count().to_string(),
            kind.to_string(),
            stretch,
            float_cell(baseline.total_weight()),
            float_cell(found.total_weight()),
            exact_cell,
        ],
        times: vec![
            index.to_string(),
            format!("{baseline_secs:.6}"),
            format!("{mcts_secs:.6}"),
            exact_secs_cell,
        ],
        warning,
    })
}
