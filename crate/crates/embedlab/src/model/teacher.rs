//! Frozen teacher oracle.
//!
//! A seeded, randomly initialized encoder of the teacher width, with
//! instruction conditioning realized as one of two fixed output heads.
//! It is deterministic and never receives gradient updates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::config::{EncoderConfig, TeacherInstruction};
use crate::model::encoder::{self, EncodeCtx, TapeBindings};
use crate::model::params::ParamStore;
use crate::model::Role;
use crate::numerics::{Matrix, Tape};

#[derive(Debug, Clone)]
pub struct TeacherOracle {
    cfg: EncoderConfig,
    params: ParamStore,
    heads: ParamStore,
}

const HEAD_GENERIC: &str = "head.generic-retrieval";
const HEAD_CLUSTERING: &str = "head.clustering-topic";

impl TeacherOracle {
    /// Build the oracle for a given student configuration. The teacher's
    /// width is the student's `teacher_dim`; all weights derive from
    /// `seed` alone.
    pub fn new(student_cfg: &EncoderConfig, seed: u64) -> Self {
        let cfg = EncoderConfig {
            vocab_size: student_cfg.vocab_size,
            embed_dim: student_cfg.teacher_dim,
            layers: 2,
            heads: 2,
            ffn_dim: 2 * student_cfg.teacher_dim,
            max_tokens: 4096,
            rope_theta: 10_000.0,
            // Unused by the oracle itself; must satisfy m > n validation.
            teacher_dim: 2 * student_cfg.teacher_dim,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x7e0);
        let params = encoder::init_encoder(&cfg, &mut rng);
        let m = cfg.embed_dim;
        let mut heads = ParamStore::new();
        let mut head_rng = ChaCha8Rng::seed_from_u64(seed);
        head_rng.set_stream(0x7e1);
        let std = 1.0 / (m as f64).sqrt();
        heads.insert(HEAD_GENERIC, encoder::gaussian_tensor(&mut head_rng, m, m, std));
        heads.insert(HEAD_CLUSTERING, encoder::gaussian_tensor(&mut head_rng, m, m, std));
        TeacherOracle { cfg, params, heads }
    }

    pub fn dim(&self) -> usize {
        self.cfg.embed_dim
    }

    /// Deterministic unit-norm embedding of dimension m.
    pub fn embed(
        &self,
        tokens: &[u32],
        role: Role,
        instruction: TeacherInstruction,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let mut bindings = TapeBindings::new();
        bindings.bind(&mut tape, &self.params, false)?;
        let ctx = EncodeCtx::plain(&self.cfg, &bindings);
        let hidden = encoder::encode(&mut tape, &ctx, tokens, role)?;

        let head_name = match instruction {
            TeacherInstruction::GenericRetrieval => HEAD_GENERIC,
            TeacherInstruction::ClusteringTopic => HEAD_CLUSTERING,
        };
        let head: Matrix = self
            .heads
            .get(head_name)
            .expect("head tensors exist")
            .to_matrix();
        let head_node = tape.constant(head)?;
        let head_t = tape.transpose(head_node)?;
        let projected = tape.matmul(hidden, head_t)?;
        let out = tape.row_l2_normalize(projected)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Combined hash of every teacher byte; the freeze-contract witness.
    pub fn content_hash(&self) -> u64 {
        self.params.content_hash() ^ self.heads.content_hash().rotate_left(17)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::cosine;

    fn oracle() -> TeacherOracle {
        let cfg = EncoderConfig {
            vocab_size: 64,
            embed_dim: 8,
            teacher_dim: 16,
            max_tokens: 16,
            ffn_dim: 16,
            ..Default::default()
        };
        TeacherOracle::new(&cfg, 42)
    }

    #[test]
    fn deterministic_and_m_dimensional() {
        let t = oracle();
        let a = t.embed(&[5, 6, 7], Role::Document, TeacherInstruction::GenericRetrieval).unwrap();
        let b = t.embed(&[5, 6, 7], Role::Document, TeacherInstruction::GenericRetrieval).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn instructions_give_distinct_embedding_functions() {
        let t = oracle();
        let g = t.embed(&[5, 6, 7], Role::Document, TeacherInstruction::GenericRetrieval).unwrap();
        let c = t.embed(&[5, 6, 7], Role::Document, TeacherInstruction::ClusteringTopic).unwrap();
        assert!(cosine(&g, &c).unwrap() < 1.0 - 1e-6);
    }
}
