//! Model configuration and the small enums shared across the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Task categories served by separate adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Retrieval,
    TextMatching,
    Clustering,
    Classification,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Retrieval,
        TaskKind::TextMatching,
        TaskKind::Clustering,
        TaskKind::Classification,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Retrieval => "retrieval",
            TaskKind::TextMatching => "text-matching",
            TaskKind::Clustering => "clustering",
            TaskKind::Classification => "classification",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Input role; each role maps to a fixed text prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Query,
    Document,
}

impl Role {
    pub fn prefix_str(&self) -> &'static str {
        match self {
            Role::Query => "Query:",
            Role::Document => "Document:",
        }
    }
}

/// Instruction tag conditioning the teacher oracle's output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherInstruction {
    GenericRetrieval,
    ClusteringTopic,
}

/// Which side of the student/teacher pair the projection is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionSide {
    /// psi: R^n -> R^m maps student embeddings into teacher space.
    StudentSide,
    /// psi: R^m -> R^n maps teacher embeddings into student space.
    TeacherSide,
}

/// Shape of the student encoder (and, with a wider embed_dim, the teacher).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    /// Student embedding dimension n.
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub max_tokens: usize,
    /// Rotary base frequency; a per-phase value, substituted per stage.
    pub rope_theta: f64,
    /// Teacher embedding dimension m (m > n).
    pub teacher_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 512,
            embed_dim: 32,
            layers: 2,
            heads: 2,
            ffn_dim: 64,
            max_tokens: 48,
            rope_theta: 10_000.0,
            teacher_dim: 64,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.layers == 0 {
            return Err(Error::Config("encoder dims must be positive".into()));
        }
        if self.embed_dim % (2 * self.heads) != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} must be divisible by 2*heads (heads={})",
                self.embed_dim, self.heads
            )));
        }
        if self.rope_theta <= 0.0 {
            return Err(Error::Config(format!("rope_theta must be > 0, got {}", self.rope_theta)));
        }
        if self.teacher_dim <= self.embed_dim {
            return Err(Error::Config(format!(
                "teacher_dim {} must exceed embed_dim {}",
                self.teacher_dim, self.embed_dim
            )));
        }
        if self.vocab_size < crate::model::tokenizer::CONTENT_BASE as usize + 1 {
            return Err(Error::Config("vocab too small for reserved tokens".into()));
        }
        if self.max_tokens < 3 {
            return Err(Error::Config("max_tokens must allow prefix + body + eos".into()));
        }
        Ok(())
    }
}

/// Low-rank adapter shape; the effective update is (alpha/r) * B * A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub rank: usize,
    pub alpha: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig { rank: 32, alpha: 32.0 }
    }
}

impl AdapterConfig {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("adapter rank must be >= 1".into()));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config("adapter alpha must be > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn role_prefixes_are_literal() {
        assert_eq!(Role::Query.prefix_str(), "Query:");
        assert_eq!(Role::Document.prefix_str(), "Document:");
    }

    #[test]
    fn default_config_is_valid() {
        EncoderConfig::default().validate().unwrap();
    }

    #[test]
    fn rope_pairing_constraint_enforced() {
        let cfg = EncoderConfig { embed_dim: 30, heads: 2, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn alpha_equal_rank_gives_unit_scaling() {
        let cfg = AdapterConfig { rank: 32, alpha: 32.0 };
        assert_eq!(cfg.scaling(), 1.0);
    }
}
