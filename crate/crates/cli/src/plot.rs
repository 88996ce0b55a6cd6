//! `plot`: cost-vs-cost scatter plots from a results CSV.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use crate::common::{at_path, load_config, need, CliError};
use crate::csvio::read_csv;
use crate::svg::scatter;

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results CSV from `solve`.
    #[arg(long)]
    results: Option<PathBuf>,
    /// Output directory for the SVG files.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PlotConfig {
    results: Option<PathBuf>,
    out: Option<PathBuf>,
}

fn parse_cost(cell: &str, path: &PathBuf, row: usize, column: &str) -> Result<f64, CliError> {
    cell.parse().map_err(|_| {
        CliError::Validation(format!(
            "{}: row {row}: {column} is not a number: {cell:?}",
            path.display()
        ))
    })
}

pub fn run(args: PlotArgs) -> Result<(), CliError> {
    let cfg: PlotConfig = load_config(&args.config)?;
    let results = need("--results", args.results.or(cfg.results))?;
    let out = need("--out", args.out.or(cfg.out))?;

    let table = at_path(&results, read_csv(&results))?;
    let baseline_col = table.column("baseline_cost")?;
    let mcts_col = table.column("mcts_cost")?;
    let exact_col = table.column("exact_cost")?;

    let mut baseline_mcts = Vec::new();
    let mut exact_mcts = Vec::new();
    let mut exact_baseline = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let baseline = parse_cost(&row[baseline_col], &results, i + 2, "baseline_cost")?;
        let mcts = parse_cost(&row[mcts_col], &results, i + 2, "mcts_cost")?;
        baseline_mcts.push((baseline, mcts));
        if !row[exact_col].is_empty() {
            let exact = parse_cost(&row[exact_col], &results, i + 2, "exact_cost")?;
            exact_mcts.push((exact, mcts));
            exact_baseline.push((exact, baseline));
        }
    }

    std::fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    let mut emit = |name: &str, title: &str, x: &str, y: &str, points: &[(f64, f64)]| {
        let path = out.join(name);
        std::fs::write(&path, scatter(title, x, y, points)).map(|()| written.push(name.to_string()))
    };
    emit(
        "mcts_vs_baseline.svg",
        "Search vs baseline cost",
        "baseline cost",
        "search cost",
        &baseline_mcts,
    )?;
    if !exact_mcts.is_empty() {
        emit("mcts_vs_exact.svg", "Search vs exact cost", "exact cost", "search cost", &exact_mcts)?;
        emit(
            "baseline_vs_exact.svg",
            "Baseline vs exact cost",
            "exact cost",
            "baseline cost",
            &exact_baseline,
        )?;
    }
    println!("wrote {} to {}", written.join(", "), out.display());
    Ok(())
}
