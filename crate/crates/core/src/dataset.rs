//! Versioned JSON persistence for instance collections.
//!
//! The on-disk shape is `{"version": 1, "instances": [...]}` where each
//! record carries `n`, `edges` as `[u, v, w]` triples, `terminals`, a `kind`
//! tag (`steiner`, `mult_spanner`, `add_spanner`) with its parameter
//! (`alpha` or `beta_w`) when applicable, optional `positions`, and the
//! generator `seed` when known. Loading re-validates every instance, and
//! load → save reproduces the input byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::instance::{Instance, InstanceError, LabeledSample, ProblemKind};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt dataset file: {0}")]
    Corrupt(String),
    #[error("dataset version {found} unsupported (expected {DATASET_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("instance {index} invalid: {source}")]
    Instance { index: usize, source: InstanceError },
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: u32,
    instances: Vec<InstanceRecord>,
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    terminals: Vec<usize>,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    positions: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

const KIND_STEINER: &str = "steiner";
const KIND_MULT: &str = "mult_spanner";
const KIND_ADD: &str = "add_spanner";

impl InstanceRecord {
    fn from_instance(inst: &Instance) -> Self {
        let (kind, alpha, beta_w) = match inst.kind() {
            ProblemKind::SteinerTree => (KIND_STEINER, None, None),
            ProblemKind::MultiplicativeSpanner { alpha } => (KIND_MULT, Some(alpha), None),
            ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
                (KIND_ADD, None, Some(beta_w_multiplier))
            }
        };
        InstanceRecord {
            n: inst.graph().node_count(),
            edges: inst.graph().edges().iter().map(|e| (e.u, e.v, e.weight)).collect(),
            terminals: inst.terminals().to_vec(),
            kind: kind.to_string(),
            alpha,
            beta_w,
            positions: inst.positions().map(|p| p.to_vec()),
            seed: inst.seed(),
        }
    }

    fn into_instance(self, index: usize) -> Result<Instance, DatasetError> {
        let kind = match (self.kind.as_str(), self.alpha, self.beta_w) {
            (KIND_STEINER, None, None) => ProblemKind::SteinerTree,
            (KIND_MULT, Some(alpha), None) => ProblemKind::MultiplicativeSpanner { alpha },
            (KIND_ADD, None, Some(beta_w_multiplier)) => {
                ProblemKind::AdditiveSpanner { beta_w_multiplier }
            }
            (kind, alpha, beta_w) => {
                return Err(DatasetError::Corrupt(format!(
                    "instance {index}: kind {kind:?} inconsistent with alpha={alpha:?}, beta_w={beta_w:?}"
                )))
            }
        };
        let graph = Graph::new(self.n, &self.edges)
            .map_err(|e| DatasetError::Instance { index, source: e.into() })?;
        Instance::new(graph, self.terminals, kind, self.positions, self.seed)
            .map_err(|source| DatasetError::Instance { index, source })
    }
}

/// Serializes instances to the dataset JSON text (pretty-printed, trailing
/// newline). The encoding is canonical: re-serializing a loaded dataset is
/// byte-identical.
pub fn to_json(instances: &[Instance]) -> String {
    let file = DatasetFile {
        version: DATASET_VERSION,
        instances: instances.iter().map(InstanceRecord::from_instance).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("dataset records always serialize");
    text.push('\n');
    text
}

pub fn from_json(text: &str) -> Result<Vec<Instance>, DatasetError> {
    #[derive(Deserialize)]
    struct VersionProbe {
        version: u32,
    }
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| DatasetError::Corrupt(e.to_string()))?;
    if probe.version != DATASET_VERSION {
        return Err(DatasetError::VersionMismatch { found: probe.version });
    }
    let file: DatasetFile =
        serde_json::from_str(text).map_err(|e| DatasetError::Corrupt(e.to_string()))?;
    file.instances
        .into_iter()
        .enumerate()
        .map(|(index, record)| record.into_instance(index))
        .collect()
}

pub fn save_dataset(path: &Path, instances: &[Instance]) -> Result<(), DatasetError> {
    Ok(std::fs::write(path, to_json(instances))?)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Instance>, DatasetError> {
    from_json(&std::fs::read_to_string(path)?)
}

/// One labeled instance: the exact solution's cost and node set, plus the
/// supervision steps expanded from it.
#[derive(Debug, Clone)]
pub struct LabeledItem {
    pub instance: Instance,
    pub exact_cost: f64,
    pub solution_nodes: Vec<usize>,
    pub samples: Vec<LabeledSample>,
}

#[derive(Serialize, Deserialize)]
struct LabeledFile {
    version: u32,
    items: Vec<LabeledRecord>,
}

#[derive(Serialize, Deserialize)]
struct LabeledRecord {
    instance: InstanceRecord,
    exact_cost: f64,
    solution_nodes: Vec<usize>,
    samples: Vec<LabeledSample>,
}

pub fn labeled_to_json(items: &[LabeledItem]) -> String {
    let file = LabeledFile {
        version: DATASET_VERSION,
        items: items
            .iter()
            .map(|item| LabeledRecord {
                instance: InstanceRecord::from_instance(&item.instance),
                exact_cost: item.exact_cost,
                solution_nodes: item.solution_nodes.clone(),
                samples: item.samples.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("labeled records always serialize");
    text.push('\n');
    text
}

pub fn labeled_from_json(text: &str) -> Result<Vec<LabeledItem>, DatasetError> {
    let file: LabeledFile =
        serde_json::from_str(text).map_err(|e| DatasetError::Corrupt(e.to_string()))?;
    if file.version != DATASET_VERSION {
        return Err(DatasetError::VersionMismatch { found: file.version });
    }
    file.items
        .into_iter()
        .enumerate()
        .map(|(index, record)| {
            let instance = record.instance.into_instance(index)?;
            let n = instance.graph().node_count();
            for sample in &record.samples {
                let in_range =
                    sample.target < n && sample.current_set.iter().all(|&v| v < n);
                if !in_range || sample.current_set.contains(&sample.target) {
                    return Err(DatasetError::Corrupt(format!(
                        "instance {index}: sample targets node {} outside the legal range",
                        sample.target
                    )));
                }
            }
            Ok(LabeledItem {
                instance,
                exact_cost: record.exact_cost,
                solution_nodes: record.solution_nodes,
                samples: record.samples,
            })
        })
        .collect()
}

pub fn save_labeled(path: &Path, items: &[LabeledItem]) -> Result<(), DatasetError> {
    Ok(std::fs::write(path, labeled_to_json(items))?)
}

pub fn load_labeled(path: &Path) -> Result<Vec<LabeledItem>, DatasetError> {
    labeled_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_geometric;

    fn spanner_instance(kind: ProblemKind) -> Instance {
        let g = Graph::new(4, &[(0, 1, 2.0), (1, 2, 3.0), (2, 3, 1.0), (0, 3, 9.0)]).unwrap();
        Instance::new(g, vec![0, 3], kind, None, Some(11)).unwrap()
    }

    fn assert_same(a: &Instance, b: &Instance) {
        assert_eq!(a.graph().node_count(), b.graph().node_count());
        let edges = |i: &Instance| {
            i.graph().edges().iter().map(|e| (e.u, e.v, e.weight.to_bits())).collect::<Vec<_>>()
        };
        assert_eq!(edges(a), edges(b));
        assert_eq!(a.terminals(), b.terminals());
        assert_eq!(a.kind(), b.kind());
        assert_eq!(a.positions(), b.positions());
        assert_eq!(a.seed(), b.seed());
    }

    #[test]
    fn round_trip_preserves_every_field() {
        let instances = vec![
            generate_geometric(12, 3).unwrap(),
            generate_geometric(8, 4).unwrap(),
            spanner_instance(ProblemKind::MultiplicativeSpanner { alpha: 2.0 }),
            spanner_instance(ProblemKind::AdditiveSpanner { beta_w_multiplier: 2.0 }),
            spanner_instance(ProblemKind::SteinerTree),
        ];
        let loaded = from_json(&to_json(&instances)).unwrap();
        assert_eq!(loaded.len(), instances.len());
        for (a, b) in instances.iter().zip(&loaded) {
            assert_same(a, b);
        }
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let instances =
            vec![generate_geometric(15, 99).unwrap(), generate_geometric(10, 100).unwrap()];
        let first = to_json(&instances);
        let second = to_json(&from_json(&first).unwrap());
        assert_eq!(first, second);
    }

    #[test]
    fn empty_dataset_round_trips() {
        assert!(from_json(&to_json(&[])).unwrap().is_empty());
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = to_json(&[]).replace("\"version\": 1", "\"version\": 2");
        assert!(matches!(from_json(&text), Err(DatasetError::VersionMismatch { found: 2 })));
    }

    #[test]
    fn corrupt_text_is_rejected() {
        assert!(matches!(from_json("{"), Err(DatasetError::Corrupt(_))));
        assert!(matches!(from_json("{\"instances\": []}"), Err(DatasetError::Corrupt(_))));
    }

    #[test]
    fn kind_parameter_mismatch_is_rejected() {
        let good = to_json(&[spanner_instance(ProblemKind::MultiplicativeSpanner { alpha: 2.0 })]);
        let bad = good.replace("mult_spanner", "steiner");
        assert!(matches!(from_json(&bad), Err(DatasetError::Corrupt(_))));
    }

    #[test]
    fn spanner_parameters_survive_the_trip() {
        let text = to_json(&[spanner_instance(ProblemKind::AdditiveSpanner {
            beta_w_multiplier: 2.0,
        })]);
        assert!(text.contains("\"beta_w\": 2.0"));
        assert!(!text.contains("\"alpha\""));
        match from_json(&text).unwrap()[0].kind() {
            ProblemKind::AdditiveSpanner { beta_w_multiplier } => {
                assert_eq!(beta_w_multiplier, 2.0)
            }
            other => panic!("wrong kind {other:?}"),
        }
    }

    #[test]
    fn invalid_instance_in_file_is_rejected_with_its_index() {
        let text = to_json(&[spanner_instance(ProblemKind::SteinerTree)])
            .replace("\"terminals\": [\n        0,\n        3\n      ]", "\"terminals\": [\n        0\n      ]");
        match from_json(&text) {
            Err(DatasetError::Instance { index: 0, source: InstanceError::TooFewTerminals }) => {}
            other => panic!("expected instance error, got {other:?}"),
        }
    }

    #[test]
    fn labeled_samples_round_trip() {
        let inst = generate_geometric(8, 2).unwrap();
        let items = vec![LabeledItem {
            instance: inst,
            exact_cost: 12.0,
            solution_nodes: vec![0, 2, 5],
            samples: vec![
                LabeledSample { current_set: vec![0, 2], target: 5 },
                LabeledSample { current_set: vec![0, 2, 5], target: 6 },
            ],
        }];
        let text = labeled_to_json(&items);
        assert_eq!(text, labeled_to_json(&labeled_from_json(&text).unwrap()));
        let loaded = labeled_from_json(&text).unwrap();
        assert_eq!(loaded[0].samples, items[0].samples);
        assert_eq!(loaded[0].exact_cost, 12.0);
        assert_eq!(loaded[0].solution_nodes, vec![0, 2, 5]);

        let bad = text.replace("\"target\": 5", "\"target\": 99");
        assert!(matches!(labeled_from_json(&bad), Err(DatasetError::Corrupt(_))));
    }

    #[test]
    fn files_round_trip_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.json");
        let instances = vec![generate_geometric(9, 1).unwrap()];
        save_dataset(&path, &instances).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_same(&instances[0], &loaded[0]);
        assert!(matches!(
            load_dataset(&dir.path().join("missing.json")),
            Err(DatasetError::Io(_))
        ));
    }
}
