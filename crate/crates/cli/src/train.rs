//! `train`: fit the node-selection policy to labeled samples.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use sparse_mcts_core::dataset::load_labeled;
use sparse_mcts_core::gnn::{train, PolicyModel, TrainConfig, TrainingItem};
use sparse_mcts_core::instance::derive_seed;

use crate::common::{at_path, load_config, need, resolve_seed, CliError};
use crate::csvio::{float_cell, write_csv};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Labeled-sample file from `label`.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Hidden state width.
    #[arg(long)]
    dim: Option<usize>,
    /// Message-passing rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// ADAM learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Samples averaged per gradient step.
    #[arg(long)]
    batch: Option<usize>,
    /// Fraction of samples held out for early stopping.
    #[arg(long)]
    val_frac: Option<f64>,
    /// Root RNG seed (falls back to SPARSE_MCTS_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Output model path.
    #[arg(long)]
    out_model: Option<PathBuf>,
    /// Loss-history CSV; defaults to the model path with a .history.csv
    /// extension.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TrainFileConfig {
    samples: Option<PathBuf>,
    dim: Option<usize>,
    rounds: Option<usize>,
    lr: Option<f64>,
    epochs: Option<usize>,
    patience: Option<usize>,
    batch: Option<usize>,
    val_frac: Option<f64>,
    seed: Option<u64>,
    out_model: Option<PathBuf>,
    history: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let cfg: TrainFileConfig = load_config(&args.config)?;
    let samples_path = need("--samples", args.samples.or(cfg.samples))?;
    let dim = args.dim.or(cfg.dim).unwrap_or(128);
    let rounds = args.rounds.or(cfg.rounds).unwrap_or(3);
    let seed = resolve_seed(args.seed, cfg.seed)?;
    let out_model = need("--out-model", args.out_model.or(cfg.out_model))?;
    let history_path = args
        .history
        .or(cfg.history)
        .unwrap_or_else(|| out_model.with_extension("history.csv"));
    let config = TrainConfig {
        learning_rate: args.lr.or(cfg.lr).unwrap_or(1e-3),
        max_epochs: args.epochs.or(cfg.epochs).unwrap_or(60),
        patience: args.patience.or(cfg.patience).unwrap_or(15),
        batch_size: args.batch.or(cfg.batch).unwrap_or(1),
        validation_fraction: args.val_frac.or(cfg.val_frac).unwrap_or(0.1),
        seed: derive_seed(seed, "train", 0),
    };
    if dim == 0 || rounds == 0 {
        return Err(CliError::Validation("--dim and --rounds must be positive".into()));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(CliError::Validation(format!(
            "--val-frac must be in [0,1), got {}",
            config.validation_fraction
        )));
    }

    let labeled = at_path(&samples_path, load_labeled(&samples_path))?;
    let items: Vec<TrainingItem> = labeled
        .iter()
        .enumerate()
        .map(|(index, item)| {
            TrainingItem::from_instance(
                &item.instance,
                derive_seed(seed, "layout", index as u64),
                item.samples.clone(),
            )
        })
        .filter(|item| !item.samples.is_empty())
        .collect();
    let total: usize = items.iter().map(|i| i.samples.len()).sum();
    if total == 0 {
        return Err(CliError::Validation(format!(
            "{}: no training samples",
            samples_path.display()
        )));
    }

    let mut model = PolicyModel::new(dim, rounds, derive_seed(seed, "init", 0));
    let report = train(&mut model, &items, &config);
    at_path(&out_model, model.save(&out_model))?;
    let rows: Vec<Vec<String>> = report
        .history
        .iter()
        .map(|s| {
            vec![s.epoch.to_string(), float_cell(s.train_loss), float_cell(s.validation_loss)]
        })
        .collect();
    write_csv(&history_path, &["epoch", "train_loss", "validation_loss"], &rows)?;
    println!(
        "trained on {total} samples for {} epochs (best validation {:.6} at epoch {}); model {}, history {}",
        report.history.len(),
        report.best_validation_loss,
        report.best_epoch,
        out_model.display(),
        history_path.display()
    );
    Ok(())
}
