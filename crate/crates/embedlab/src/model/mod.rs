//! Student encoder, per-task adapters, projection, teacher oracle, and
//! the checkpoint file format.

pub mod checkpoint;
mod config;
pub mod encoder;
mod params;
mod teacher;
pub mod tokenizer;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{AdapterConfig, EncoderConfig, ProjectionSide, Role, TaskKind, TeacherInstruction};
pub use params::{ParamStore, Tensor};
pub use teacher::TeacherOracle;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape};
use encoder::{names, EncodeCtx, TapeBindings};

// ── Projection ───────────────────────────────────────────────────────

/// Affine map between student and teacher embedding spaces.
#[derive(Debug, Clone)]
pub struct Projection {
    /// out_dim x in_dim.
    pub w: Matrix,
    /// 1 x out_dim.
    pub b: Matrix,
    pub trainable: bool,
    pub side: ProjectionSide,
}

impl Projection {
    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

/// psi(z) = W z + b.
pub fn project(psi: &Projection, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != psi.in_dim() {
        return Err(Error::Contract(format!(
            "project: input dim {} does not match projection in-dim {}",
            z.len(),
            psi.in_dim()
        )));
    }
    let mut out = Vec::with_capacity(psi.out_dim());
    for r in 0..psi.out_dim() {
        let row = psi.w.row(r);
        let mut acc = psi.b.get(0, r);
        for (wi, zi) in row.iter().zip(z) {
            acc += wi * zi;
        }
        out.push(acc);
    }
    Ok(out)
}

// ── Adapter merging ──────────────────────────────────────────────────

/// W_eff = W_base + (alpha/r) * B * A for every matrix the adapter
/// targets. The base store is not modified.
pub fn apply_adapter(
    base: &ParamStore,
    adapter: &ParamStore,
    adapter_cfg: &AdapterConfig,
    task: TaskKind,
    cfg: &EncoderConfig,
) -> Result<ParamStore> {
    let scaling = adapter_cfg.scaling();
    let mut out = base.clone();
    for l in 0..cfg.layers {
        for target in encoder::LORA_TARGETS {
            let a_name = names::lora(task, l, target, "a");
            let b_name = names::lora(task, l, target, "b");
            let (Some(a), Some(bm)) = (adapter.get(&a_name), adapter.get(&b_name)) else {
                continue;
            };
            let base_name = names::attn(l, target);
            let w = out
                .get(&base_name)
                .ok_or_else(|| Error::Config(format!("missing base tensor {}", base_name)))?;
            let am = a.to_matrix();
            let bmat = bm.to_matrix();
            if bmat.cols() != am.rows() || bmat.rows() != w.rows || am.cols() != w.cols {
                return Err(Error::Config(format!(
                    "adapter shapes {}x{} * {}x{} incompatible with {} ({}x{})",
                    bmat.rows(),
                    bmat.cols(),
                    am.rows(),
                    am.cols(),
                    base_name,
                    w.rows,
                    w.cols
                )));
            }
            let update = bmat.matmul(&am)?.scale(scaling);
            let merged = w.to_matrix().add(&update)?;
            *out.get_mut(&base_name).expect("tensor exists") = Tensor::from_matrix(&merged);
        }
    }
    Ok(out)
}

// ── Model state ──────────────────────────────────────────────────────

/// Student weights: backbone, projection, per-task adapters, and the
/// learnable log-temperature.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub cfg: EncoderConfig,
    pub adapter_cfg: AdapterConfig,
    pub projection_side: ProjectionSide,
    pub encoder: ParamStore,
    pub projection: ParamStore,
    pub adapters: BTreeMap<TaskKind, ParamStore>,
    /// ln(tau) for the learnable contrastive temperature.
    pub log_tau: f32,
}

impl ModelState {
    pub fn init(
        cfg: EncoderConfig,
        adapter_cfg: AdapterConfig,
        side: ProjectionSide,
        seed: u64,
        initial_tau: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        adapter_cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x1);
        let enc = encoder::init_encoder(&cfg, &mut rng);
        let (in_dim, out_dim) = match side {
            ProjectionSide::StudentSide => (cfg.embed_dim, cfg.teacher_dim),
            ProjectionSide::TeacherSide => (cfg.teacher_dim, cfg.embed_dim),
        };
        let mut prng = ChaCha8Rng::seed_from_u64(seed);
        prng.set_stream(0x2);
        let projection = encoder::init_projection(in_dim, out_dim, &mut prng);
        Ok(ModelState {
            cfg,
            adapter_cfg,
            projection_side: side,
            encoder: enc,
            projection,
            adapters: BTreeMap::new(),
            log_tau: (initial_tau.ln()) as f32,
        })
    }

    pub fn tau(&self) -> f64 {
        (self.log_tau as f64).exp()
    }

    /// Create the task's adapter if absent (A small random, B zero).
    pub fn ensure_adapter(&mut self, task: TaskKind, seed: u64) {
        if self.adapters.contains_key(&task) {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x10 + task as u64);
        let store = encoder::init_adapter(&self.cfg, &self.adapter_cfg, task, &mut rng);
        self.adapters.insert(task, store);
    }

    /// f64 view of the projection tensors.
    pub fn projection_struct(&self, trainable: bool) -> Projection {
        Projection {
            w: self.projection.get(&names::proj_w()).expect("proj.w").to_matrix(),
            b: self.projection.get(&names::proj_b()).expect("proj.b").to_matrix(),
            trainable,
            side: self.projection_side,
        }
    }

    /// Flatten all stores into prefixed (name, tensor) pairs for
    /// checkpointing: "enc.*", "proj.*", "adp.<task>.*".
    pub fn flatten(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (n, t) in self.encoder.iter() {
            out.push((format!("enc.{}", n), t.clone()));
        }
        // Projection tensors already carry the "proj." prefix.
        for (n, t) in self.projection.iter() {
            out.push((n.to_string(), t.clone()));
        }
        // Adapter tensor names already start with their task.
        for store in self.adapters.values() {
            for (n, t) in store.iter() {
                out.push((format!("adp.{}", n), t.clone()));
            }
        }
        out
    }

    /// Rebuild from checkpoint tensors.
    pub fn from_tensors(
        meta: &checkpoint::CheckpointMeta,
        tensors: &[(String, Tensor)],
    ) -> Result<Self> {
        let mut encoder_store = ParamStore::new();
        let mut projection = ParamStore::new();
        let mut adapters: BTreeMap<TaskKind, ParamStore> = BTreeMap::new();
        for (name, t) in tensors {
            if let Some(rest) = name.strip_prefix("enc.") {
                encoder_store.insert(rest, t.clone());
            } else if name.starts_with("proj.") {
                projection.insert(name, t.clone());
            } else if let Some(rest) = name.strip_prefix("adp.") {
                let task = TaskKind::ALL
                    .iter()
                    .find(|k| rest.starts_with(k.as_str()))
                    .copied()
                    .ok_or_else(|| Error::Format(format!("unknown adapter tensor {}", name)))?;
                adapters.entry(task).or_default().insert(rest, t.clone());
            } else if name.starts_with("opt.") {
                // Optimizer moments are restored by the trainer.
            } else {
                return Err(Error::Format(format!("unknown tensor prefix {}", name)));
            }
        }
        if encoder_store.is_empty() || projection.is_empty() {
            return Err(Error::Format("checkpoint missing encoder or projection tensors".into()));
        }
        Ok(ModelState {
            cfg: meta.encoder.clone(),
            adapter_cfg: meta.adapter,
            projection_side: meta.projection_side,
            encoder: encoder_store,
            projection,
            adapters,
            log_tau: meta.log_tau,
        })
    }

    /// Encode outside of training: all weights constant, scratch tape.
    pub fn encode_eager(
        &self,
        task: Option<TaskKind>,
        tokens: &[u32],
        role: Role,
        rope_theta: Option<f64>,
        max_tokens: Option<usize>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let mut bindings = TapeBindings::new();
        bindings.bind(&mut tape, &self.encoder, false)?;
        let mut lora_scaling = 1.0;
        if let Some(t) = task {
            if let Some(store) = self.adapters.get(&t) {
                bindings.bind(&mut tape, store, false)?;
                lora_scaling = self.adapter_cfg.scaling();
            }
        }
        let ctx = EncodeCtx {
            cfg: &self.cfg,
            bindings: &bindings,
            task,
            lora_scaling,
            rope_theta: rope_theta.unwrap_or(self.cfg.rope_theta),
            max_tokens: max_tokens.unwrap_or(self.cfg.max_tokens),
        };
        let id = encoder::encode(&mut tape, &ctx, tokens, role)?;
        Ok(tape.value(id).data().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn project_identity_and_bias() {
        let psi = Projection {
            w: Matrix::identity(2),
            b: Matrix::zeros(1, 2),
            trainable: true,
            side: ProjectionSide::StudentSide,
        };
        assert_eq!(project(&psi, &[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);

        let psi_b = Projection {
            w: Matrix::zeros(2, 2),
            b: Matrix::from_vec(1, 2, vec![5.0, 6.0]).unwrap(),
            trainable: true,
            side: ProjectionSide::StudentSide,
        };
        assert_eq!(project(&psi_b, &[0.0, 0.0]).unwrap(), vec![5.0, 6.0]);
    }

    #[test]
    fn project_hand_value() {
        let psi = Projection {
            w: Matrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            b: Matrix::from_vec(1, 3, vec![1.0, 1.0, 1.0]).unwrap(),
            trainable: true,
            side: ProjectionSide::StudentSide,
        };
        assert_eq!(project(&psi, &[1.0, 1.0]).unwrap(), vec![4.0, 8.0, 12.0]);
    }

    #[test]
    fn project_rejects_dim_mismatch() {
        let psi = Projection {
            w: Matrix::identity(2),
            b: Matrix::zeros(1, 2),
            trainable: false,
            side: ProjectionSide::StudentSide,
        };
        assert!(matches!(project(&psi, &[1.0]), Err(Error::Contract(_))));
    }

    fn tiny_state() -> ModelState {
        let cfg = EncoderConfig {
            vocab_size: 32,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            ffn_dim: 16,
            max_tokens: 16,
            teacher_dim: 16,
            ..Default::default()
        };
        ModelState::init(cfg, AdapterConfig { rank: 2, alpha: 2.0 }, ProjectionSide::StudentSide, 3, 0.02)
            .unwrap()
    }

    #[test]
    fn zero_b_merge_is_identity() {
        let mut state = tiny_state();
        state.ensure_adapter(TaskKind::Retrieval, 3);
        let merged = apply_adapter(
            &state.encoder,
            &state.adapters[&TaskKind::Retrieval],
            &state.adapter_cfg,
            TaskKind::Retrieval,
            &state.cfg,
        )
        .unwrap();
        assert_eq!(merged.content_hash(), state.encoder.content_hash());
    }

    #[test]
    fn rank_one_outer_product_update() {
        let state = tiny_state();
        let n = state.cfg.embed_dim;
        let mut adapter = ParamStore::new();
        // A = e_0 (1 x n), B = e_0 (n x 1): update is a single 1 at (0,0).
        let mut a = Tensor::zeros(1, n);
        a.data[0] = 1.0;
        let mut b = Tensor::zeros(n, 1);
        b.data[0] = 1.0;
        adapter.insert(&names::lora(TaskKind::Retrieval, 0, "wq", "a"), a);
        adapter.insert(&names::lora(TaskKind::Retrieval, 0, "wq", "b"), b);
        let merged = apply_adapter(
            &state.encoder,
            &adapter,
            &AdapterConfig { rank: 1, alpha: 1.0 },
            TaskKind::Retrieval,
            &state.cfg,
        )
        .unwrap();
        let before = state.encoder.get("l0.wq").unwrap();
        let after = merged.get("l0.wq").unwrap();
        for i in 0..before.data.len() {
            let delta = after.data[i] - before.data[i];
            if i == 0 {
                assert!((delta - 1.0).abs() < 1e-6);
            } else {
                assert_eq!(delta, 0.0);
            }
        }
    }

    #[test]
    fn flatten_round_trips_through_checkpoint_tensors() {
        let mut state = tiny_state();
        state.ensure_adapter(TaskKind::Clustering, 3);
        let tensors = state.flatten();
        let meta = checkpoint::CheckpointMeta {
            format_version: checkpoint::FORMAT_VERSION,
            encoder: state.cfg.clone(),
            adapter: state.adapter_cfg,
            projection_side: state.projection_side,
            step: 0,
            log_tau: state.log_tau,
            teacher_seed: 0,
            stage: None,
            rng: None,
            dataset_cursors: vec![],
        };
        let restored = ModelState::from_tensors(&meta, &tensors).unwrap();
        assert_eq!(restored.encoder.content_hash(), state.encoder.content_hash());
        assert_eq!(restored.projection.content_hash(), state.projection.content_hash());
        assert_eq!(
            restored.adapters[&TaskKind::Clustering].content_hash(),
            state.adapters[&TaskKind::Clustering].content_hash()
        );
    }
}
