//! Training configuration, dataset bindings, and desk-scale presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::{AdapterConfig, EncoderConfig, ProjectionSide, TaskKind};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Training stages of the two-stage regimen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Distill,
    LongContext,
    AdapterRetrieval,
    AdapterSts,
    AdapterClustering,
    AdapterClassification,
}

impl Stage {
    pub fn task(&self) -> Option<TaskKind> {
        match self {
            Stage::Distill | Stage::LongContext => None,
            Stage::AdapterRetrieval => Some(TaskKind::Retrieval),
            Stage::AdapterSts => Some(TaskKind::TextMatching),
            Stage::AdapterClustering => Some(TaskKind::Clustering),
            Stage::AdapterClassification => Some(TaskKind::Classification),
        }
    }

    pub fn is_adapter_stage(&self) -> bool {
        self.task().is_some()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Distill => "distill",
            Stage::LongContext => "long-context",
            Stage::AdapterRetrieval => "adapter-retrieval",
            Stage::AdapterSts => "adapter-sts",
            Stage::AdapterClustering => "adapter-clustering",
            Stage::AdapterClassification => "adapter-classification",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        match s {
            "distill" => Ok(Stage::Distill),
            "long-context" => Ok(Stage::LongContext),
            "adapter-retrieval" => Ok(Stage::AdapterRetrieval),
            "adapter-sts" => Ok(Stage::AdapterSts),
            "adapter-clustering" => Ok(Stage::AdapterClustering),
            "adapter-classification" => Ok(Stage::AdapterClassification),
            _ => Err(Error::Config(format!("unknown stage {}", s))),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which objective drives first-stage training (the objective-comparison
/// ablation swaps this).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Stage1Objective {
    #[default]
    Distill,
    InfoNce,
    Score,
}

impl Stage1Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage1Objective::Distill => "distill",
            Stage1Objective::InfoNce => "info-nce",
            Stage1Objective::Score => "score",
        }
    }
}

/// Record family of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Pairs,
    Triplets,
    ScoredPairs,
    ClassTuples,
}

/// One dataset a stage samples from, with optional per-dataset overrides
/// applied dynamically per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBinding {
    pub name: String,
    pub kind: DatasetKind,
    pub weight: f64,
    /// Number of synthetic records to generate (ignored when `path` set).
    pub size: usize,
    /// Generation salt, so two bindings of the same kind differ.
    #[serde(default)]
    pub salt: u64,
    /// Draw documents from the world's long-document length range.
    #[serde(default)]
    pub long_docs: bool,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub max_tokens: Option<usize>,
    /// Load records from a JSONL file instead of generating them.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

/// Full specification of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub stage: Stage,
    pub steps: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_tokens: usize,
    pub rope_theta: f64,
    pub seed: u64,
    pub teacher_seed: u64,
    pub encoder: EncoderConfig,
    pub adapter: AdapterConfig,
    pub loss_weights: LossWeights,
    pub world: crate::data::WorldConfig,
    pub datasets: Vec<DatasetBinding>,
    pub projection_side: ProjectionSide,
    /// Stage-1 trains the projection by default; stage-2 freezes it
    /// unless this is set.
    pub projection_trainable: bool,
    /// Update ln(tau) jointly with adapter parameters.
    pub learnable_tau: bool,
    /// Add truncated-dimension losses at `mrl_ladder`.
    pub mrl: bool,
    #[serde(default)]
    pub mrl_ladder: Vec<usize>,
    #[serde(default)]
    pub stage1_objective: Stage1Objective,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema_version {} unsupported (expected {})",
                self.schema_version, CONFIG_SCHEMA_VERSION
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.rope_theta <= 0.0 {
            return Err(Error::Config("rope_theta must be > 0".into()));
        }
        self.encoder.validate()?;
        self.adapter.validate()?;
        self.loss_weights.validate()?;
        self.world.validate()?;
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one dataset binding required".into()));
        }
        if self.datasets.iter().any(|d| d.weight < 0.0) {
            return Err(Error::Config("dataset weights must be >= 0".into()));
        }
        if !self.datasets.iter().any(|d| d.weight > 0.0) {
            return Err(Error::Config("at least one dataset weight must be positive".into()));
        }
        for d in &self.datasets {
            let compatible = match self.stage {
                Stage::Distill | Stage::LongContext | Stage::AdapterClustering => {
                    matches!(d.kind, DatasetKind::Pairs)
                }
                Stage::AdapterRetrieval => {
                    matches!(d.kind, DatasetKind::Triplets | DatasetKind::Pairs)
                }
                Stage::AdapterSts => matches!(
                    d.kind,
                    DatasetKind::ScoredPairs | DatasetKind::Pairs | DatasetKind::Triplets
                ),
                Stage::AdapterClassification => matches!(d.kind, DatasetKind::ClassTuples),
            };
            if !compatible {
                return Err(Error::Contract(format!(
                    "dataset {} of kind {:?} is not usable by stage {}",
                    d.name, d.kind, self.stage
                )));
            }
        }
        if self.mrl {
            for &d in self.effective_mrl_ladder().iter() {
                if d == 0 || d > self.encoder.embed_dim {
                    return Err(Error::Config(format!(
                        "mrl ladder dim {} outside [1, {}]",
                        d, self.encoder.embed_dim
                    )));
                }
            }
        }
        Ok(())
    }

    /// Default ladder {d, d/2, d/4}.
    pub fn effective_mrl_ladder(&self) -> Vec<usize> {
        if !self.mrl_ladder.is_empty() {
            return self.mrl_ladder.clone();
        }
        let d = self.encoder.embed_dim;
        vec![d, d / 2, d / 4]
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_json_file(&self, path: &std::path::Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }
}

/// Desk-scale preset for a stage: CPU-minutes scale, seeded, solvable.
pub fn preset(stage: Stage, seed: u64) -> TrainConfig {
    let encoder = EncoderConfig::default();
    let world = crate::data::WorldConfig {
        seed: seed ^ 0x5eed,
        // Long documents stay desk-sized so long-context presets finish
        // in minutes.
        long_doc_len: (64, 160),
        ..Default::default()
    };
    let base = TrainConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        stage,
        steps: 600,
        learning_rate: 1e-3,
        batch_size: 16,
        max_tokens: encoder.max_tokens,
        rope_theta: 10_000.0,
        seed,
        teacher_seed: 0x7ea,
        encoder,
        adapter: AdapterConfig::default(),
        loss_weights: LossWeights::default(),
        world,
        datasets: Vec::new(),
        projection_side: ProjectionSide::StudentSide,
        projection_trainable: true,
        learnable_tau: false,
        mrl: false,
        mrl_ladder: Vec::new(),
        stage1_objective: Stage1Objective::Distill,
    };
    match stage {
        Stage::Distill => TrainConfig {
            steps: 1000,
            learning_rate: 2e-3,
            datasets: vec![DatasetBinding {
                name: "pairs-general".into(),
                kind: DatasetKind::Pairs,
                weight: 1.0,
                size: 2048,
                salt: 1,
                long_docs: false,
                batch_size: None,
                max_tokens: None,
                path: None,
            }],
            ..base
        },
        Stage::LongContext => TrainConfig {
            steps: 600,
            learning_rate: 1e-3,
            batch_size: 4,
            max_tokens: 192,
            // Mirror the theta lowering for the long-context phase.
            rope_theta: 5_000.0,
            datasets: vec![DatasetBinding {
                name: "pairs-long".into(),
                kind: DatasetKind::Pairs,
                weight: 1.0,
                size: 512,
                salt: 2,
                long_docs: true,
                batch_size: None,
                max_tokens: None,
                path: None,
            }],
            ..base
        },
        Stage::AdapterRetrieval => TrainConfig {
            steps: 600,
            learning_rate: 1e-3,
            learnable_tau: true,
            projection_trainable: false,
            mrl: true,
            datasets: vec![
                DatasetBinding {
                    name: "triplets-short".into(),
                    kind: DatasetKind::Triplets,
                    weight: 3.0,
                    size: 2048,
                    salt: 3,
                    long_docs: false,
                    batch_size: None,
                    max_tokens: None,
                    path: None,
                },
                DatasetBinding {
                    name: "pairs-long".into(),
                    kind: DatasetKind::Pairs,
                    weight: 1.0,
                    size: 256,
                    salt: 4,
                    long_docs: true,
                    batch_size: Some(4),
                    max_tokens: Some(192),
                    path: None,
                },
            ],
            ..base
        },
        Stage::AdapterSts => TrainConfig {
            steps: 600,
            learning_rate: 1e-3,
            learnable_tau: true,
            projection_trainable: false,
            datasets: vec![
                DatasetBinding {
                    name: "scored-pairs".into(),
                    kind: DatasetKind::ScoredPairs,
                    weight: 2.0,
                    size: 2048,
                    salt: 5,
                    long_docs: false,
                    batch_size: None,
                    max_tokens: None,
                    path: None,
                },
                DatasetBinding {
                    name: "pairs-parallel".into(),
                    kind: DatasetKind::Pairs,
                    weight: 1.0,
                    size: 1024,
                    salt: 6,
                    long_docs: false,
                    batch_size: None,
                    max_tokens: None,
                    path: None,
                },
            ],
            ..base
        },
        Stage::AdapterClustering => TrainConfig {
            steps: 600,
            learning_rate: 1e-3,
            projection_trainable: false,
            datasets: vec![DatasetBinding {
                name: "pairs-clustering".into(),
                kind: DatasetKind::Pairs,
                weight: 1.0,
                size: 2048,
                salt: 7,
                long_docs: false,
                batch_size: None,
                max_tokens: None,
                path: None,
            }],
            ..base
        },
        Stage::AdapterClassification => TrainConfig {
            steps: 600,
            learning_rate: 1e-3,
            batch_size: 8,
            learnable_tau: true,
            projection_trainable: false,
            datasets: vec![DatasetBinding {
                name: "class-tuples".into(),
                kind: DatasetKind::ClassTuples,
                weight: 1.0,
                size: 1024,
                salt: 8,
                long_docs: false,
                batch_size: None,
                max_tokens: None,
                path: None,
            }],
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for stage in [
            Stage::Distill,
            Stage::LongContext,
            Stage::AdapterRetrieval,
            Stage::AdapterSts,
            Stage::AdapterClustering,
            Stage::AdapterClassification,
        ] {
            preset(stage, 7).validate().unwrap();
        }
    }

    #[test]
    fn wrong_dataset_kind_for_stage_is_rejected() {
        let mut cfg = preset(Stage::AdapterClassification, 7);
        cfg.datasets[0].kind = DatasetKind::Pairs;
        assert!(matches!(cfg.validate(), Err(Error::Contract(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = preset(Stage::AdapterRetrieval, 3);
        cfg.write_json_file(&path).unwrap();
        assert_eq!(TrainConfig::from_json_file(&path).unwrap(), cfg);
    }
}
