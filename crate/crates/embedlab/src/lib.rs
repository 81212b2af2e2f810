//! Desk-scale laboratory for training compact embedding models by
//! two-stage distillation: stage one aligns a small student encoder with
//! a frozen teacher, stage two trains task-specific low-rank adapters
//! with contrastive, ranking, and relational objectives. Includes
//! post-hoc representation transforms (truncation, binary quantization),
//! retrieval/STS/clustering/classification evaluation, synthetic corpus
//! generation, and ablation runners.

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod report;
pub mod repr;

pub use error::{Error, Result};
