//! Shared CLI plumbing: error-to-exit-code mapping, JSON config files that
//! mirror the flags, and global seed resolution.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use sparse_mcts_core::dataset::DatasetError;
use sparse_mcts_core::gnn::GnnError;
use sparse_mcts_core::graph::GraphError;
use sparse_mcts_core::instance::{InstanceError, ProblemKind};
use sparse_mcts_core::oracle::CacheError;

/// Environment fallback for `--seed` when neither the flag nor the config
/// file provides one.
pub const SEED_ENV: &str = "SPARSE_MCTS_SEED";

/// Validation problems exit with 2, I/O problems with 1.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<CacheError> for CliError {
    fn from(e: CacheError) -> Self {
        match e {
            CacheError::Io(inner) => CliError::Io(inner.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<InstanceError> for CliError {
    fn from(e: InstanceError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Prefixes an error from a load/save call with the file it concerned.
pub fn at_path<T, E: Into<CliError>>(path: &Path, result: Result<T, E>) -> Result<T, CliError> {
    result.map_err(|e| {
        let err = e.into();
        let msg = format!("{}: {}", path.display(), err.message());
        match err {
            CliError::Validation(_) => CliError::Validation(msg),
            CliError::Io(_) => CliError::Io(msg),
        }
    })
}

/// Loads the optional JSON config for a subcommand. Keys mirror the long
/// flag names in snake_case; unknown keys are rejected.
pub fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Validation(format!("config {}: {e}", p.display()))
            })
        }
    }
}

/// Unwraps a flag that must come from the command line or the config file.
pub fn need<T>(flag: &str, value: Option<T>) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Validation(format!("{flag} is required")))
}

/// Seed priority: flag, then config file, then `SPARSE_MCTS_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag.or(config) {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| {
            CliError::Validation(format!("{SEED_ENV} must be an unsigned integer, got {text:?}"))
        }),
        Err(_) => Ok(0),
    }
}

/// Maps the `--kind` tag plus stretch flags onto a problem kind.
pub fn parse_kind(kind: &str, alpha: f64, beta_w: f64) -> Result<ProblemKind, CliError> {
    match kind {
        "steiner" => Ok(ProblemKind::SteinerTree),
        "mult" => Ok(ProblemKind::MultiplicativeSpanner { alpha }),
        "add" => Ok(ProblemKind::AdditiveSpanner { beta_w_multiplier: beta_w }),
        other => Err(CliError::Validation(format!(
            "--kind must be steiner, mult, or add (got {other:?})"
        ))),
    }
}

/// Dataset-tag and stretch-parameter columns for CSV rows.
pub fn kind_columns(kind: ProblemKind) -> (&'static str, String) {
    match kind {
        ProblemKind::SteinerTree => ("steiner", String::new()),
        ProblemKind::MultiplicativeSpanner { alpha } => ("mult_spanner", format!("{alpha}")),
        ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
            ("add_spanner", format!("{beta_w_multiplier}"))
        }
    }
}
