//! Tiny transformer encoder: rotary positions, RMS norms, SiLU FFN,
//! last-token pooling, L2-normalized output. One forward implementation
//! serves training (trainable leaves), evaluation (constant leaves) and
//! the teacher oracle.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::config::{AdapterConfig, EncoderConfig, TaskKind};
use crate::model::params::{ParamStore, Tensor};
use crate::model::tokenizer::{self, Tokenizer};
use crate::model::Role;
use crate::numerics::{NodeId, Tape};

/// Attention matrices that receive LoRA updates.
pub const LORA_TARGETS: [&str; 4] = ["wq", "wk", "wv", "wo"];

// ── Tensor naming ────────────────────────────────────────────────────

pub mod names {
    use crate::model::config::TaskKind;

    pub fn embed() -> String {
        "embed".into()
    }
    pub fn attn_norm(layer: usize) -> String {
        format!("l{}.attn_norm", layer)
    }
    pub fn ffn_norm(layer: usize) -> String {
        format!("l{}.ffn_norm", layer)
    }
    pub fn attn(layer: usize, target: &str) -> String {
        format!("l{}.{}", layer, target)
    }
    pub fn ffn_up(layer: usize) -> String {
        format!("l{}.w_up", layer)
    }
    pub fn ffn_down(layer: usize) -> String {
        format!("l{}.w_down", layer)
    }
    pub fn final_norm() -> String {
        "final_norm".into()
    }
    pub fn proj_w() -> String {
        "proj.w".into()
    }
    pub fn proj_b() -> String {
        "proj.b".into()
    }
    pub fn lora(task: TaskKind, layer: usize, target: &str, half: &str) -> String {
        format!("{}.l{}.{}.{}", task.as_str(), layer, target, half)
    }
}

// ── Initialization ───────────────────────────────────────────────────

pub(crate) fn gaussian_tensor<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("std is positive");
    let data = (0..rows * cols).map(|_| normal.sample(rng) as f32).collect();
    Tensor { rows, cols, data }
}

/// Fresh backbone parameters.
pub fn init_encoder<R: Rng>(cfg: &EncoderConfig, rng: &mut R) -> ParamStore {
    let n = cfg.embed_dim;
    let mut store = ParamStore::new();
    store.insert(&names::embed(), gaussian_tensor(rng, cfg.vocab_size, n, 1.0));
    let w_std = 1.0 / (n as f64).sqrt();
    for l in 0..cfg.layers {
        store.insert(&names::attn_norm(l), Tensor::filled(1, n, 1.0));
        for t in LORA_TARGETS {
            store.insert(&names::attn(l, t), gaussian_tensor(rng, n, n, w_std));
        }
        store.insert(&names::ffn_norm(l), Tensor::filled(1, n, 1.0));
        store.insert(&names::ffn_up(l), gaussian_tensor(rng, cfg.ffn_dim, n, w_std));
        store.insert(
            &names::ffn_down(l),
            gaussian_tensor(rng, n, cfg.ffn_dim, 1.0 / (cfg.ffn_dim as f64).sqrt()),
        );
    }
    store.insert(&names::final_norm(), Tensor::filled(1, n, 1.0));
    store
}

/// Fresh projection; shapes depend on which side it sits on.
pub fn init_projection<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> ParamStore {
    let mut store = ParamStore::new();
    store.insert(
        &names::proj_w(),
        gaussian_tensor(rng, out_dim, in_dim, 1.0 / (in_dim as f64).sqrt()),
    );
    store.insert(&names::proj_b(), Tensor::zeros(1, out_dim));
    store
}

/// Fresh adapter: A small random, B zero, so the initial update is zero.
pub fn init_adapter<R: Rng>(
    cfg: &EncoderConfig,
    adapter: &AdapterConfig,
    task: TaskKind,
    rng: &mut R,
) -> ParamStore {
    let n = cfg.embed_dim;
    let mut store = ParamStore::new();
    for l in 0..cfg.layers {
        for t in LORA_TARGETS {
            store.insert(&names::lora(task, l, t, "a"), gaussian_tensor(rng, adapter.rank, n, 0.02));
            store.insert(&names::lora(task, l, t, "b"), Tensor::zeros(n, adapter.rank));
        }
    }
    store
}

// ── Tape bindings ────────────────────────────────────────────────────

/// Tensor name -> tape node, resolved once per tape.
#[derive(Debug, Default)]
pub struct TapeBindings {
    map: BTreeMap<String, NodeId>,
}

impl TapeBindings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Upcast a store onto the tape as parameters or constants.
    pub fn bind(
        &mut self,
        tape: &mut Tape,
        store: &ParamStore,
        trainable: bool,
    ) -> Result<()> {
        for (name, tensor) in store.iter() {
            let m = tensor.to_matrix();
            let id = if trainable { tape.param(m)? } else { tape.constant(m)? };
            self.map.insert(name.to_string(), id);
        }
        Ok(())
    }

    pub fn insert(&mut self, name: &str, id: NodeId) {
        self.map.insert(name.to_string(), id);
    }

    pub fn get(&self, name: &str) -> Result<NodeId> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("unbound tensor {}", name)))
    }

    pub fn try_get(&self, name: &str) -> Option<NodeId> {
        self.map.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.map.iter().map(|(n, id)| (n.as_str(), *id))
    }
}

// ── Forward pass ─────────────────────────────────────────────────────

/// Everything `encode` needs besides the tokens themselves.
pub struct EncodeCtx<'a> {
    pub cfg: &'a EncoderConfig,
    pub bindings: &'a TapeBindings,
    /// Adapter to compose into attention projections, if bound.
    pub task: Option<TaskKind>,
    pub lora_scaling: f64,
    pub rope_theta: f64,
    pub max_tokens: usize,
}

impl<'a> EncodeCtx<'a> {
    pub fn plain(cfg: &'a EncoderConfig, bindings: &'a TapeBindings) -> Self {
        EncodeCtx {
            cfg,
            bindings,
            task: None,
            lora_scaling: 1.0,
            rope_theta: cfg.rope_theta,
            max_tokens: cfg.max_tokens,
        }
    }
}

/// Prefix the role token, append EOS, run the transformer, and return the
/// L2-normalized hidden state at the final position (a 1 x n node).
///
/// Over-length inputs lose body tokens from the right; the prefix and EOS
/// are always kept. Empty token sequences are a domain error.
pub fn encode(tape: &mut Tape, ctx: &EncodeCtx, tokens: &[u32], role: Role) -> Result<NodeId> {
    if tokens.is_empty() {
        return Err(Error::Domain("encode: empty token sequence".into()));
    }
    let body_budget = ctx.max_tokens.saturating_sub(2);
    let body = &tokens[..tokens.len().min(body_budget)];
    let mut ids: Vec<usize> = Vec::with_capacity(body.len() + 2);
    ids.push(Tokenizer::role_token(role) as usize);
    ids.extend(body.iter().map(|t| *t as usize));
    ids.push(tokenizer::TOKEN_EOS as usize);

    let b = ctx.bindings;
    let embed = b.get(&names::embed())?;
    let mut x = tape.gather(embed, &ids)?;
    let seq_len = ids.len();

    for l in 0..ctx.cfg.layers {
        let h = rms_norm(tape, ctx, x, &names::attn_norm(l))?;
        let q = linear(tape, ctx, h, l, "wq")?;
        let k = linear(tape, ctx, h, l, "wk")?;
        let v = linear(tape, ctx, h, l, "wv")?;

        let hd = ctx.cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut ctx_heads: Option<NodeId> = None;
        for head in 0..ctx.cfg.heads {
            let qh = tape.slice_cols(q, head * hd, hd)?;
            let kh = tape.slice_cols(k, head * hd, hd)?;
            let vh = tape.slice_cols(v, head * hd, hd)?;
            let qh = tape.rope(qh, ctx.rope_theta)?;
            let kh = tape.rope(kh, ctx.rope_theta)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let attn = tape.softmax_row(scores)?;
            let ctx_h = tape.matmul(attn, vh)?;
            ctx_heads = Some(match ctx_heads {
                None => ctx_h,
                Some(acc) => tape.concat_cols(acc, ctx_h)?,
            });
        }
        let merged = ctx_heads.expect("at least one head");
        let o = linear_from(tape, ctx, merged, l, "wo")?;
        x = tape.add(x, o)?;

        let h2 = rms_norm(tape, ctx, x, &names::ffn_norm(l))?;
        let up_t = transposed(tape, ctx, &names::ffn_up(l))?;
        let up = tape.matmul(h2, up_t)?;
        let act = tape.silu(up)?;
        let down_t = transposed(tape, ctx, &names::ffn_down(l))?;
        let f = tape.matmul(act, down_t)?;
        x = tape.add(x, f)?;
    }

    let xf = rms_norm(tape, ctx, x, &names::final_norm())?;
    let pooled = tape.gather(xf, &[seq_len - 1])?;
    tape.row_l2_normalize(pooled)
}

fn transposed(tape: &mut Tape, ctx: &EncodeCtx, name: &str) -> Result<NodeId> {
    let w = ctx.bindings.get(name)?;
    tape.transpose(w)
}

/// x / rms(x) * gain, built from row normalization.
fn rms_norm(tape: &mut Tape, ctx: &EncodeCtx, x: NodeId, gain_name: &str) -> Result<NodeId> {
    let unit = tape.row_l2_normalize(x)?;
    let scaled = tape.scale(unit, (ctx.cfg.embed_dim as f64).sqrt())?;
    let gain = ctx.bindings.get(gain_name)?;
    tape.mul_row_broadcast(scaled, gain)
}

fn linear(tape: &mut Tape, ctx: &EncodeCtx, h: NodeId, layer: usize, target: &str) -> Result<NodeId> {
    linear_from(tape, ctx, h, layer, target)
}

/// h * W^T plus the task adapter's low-rank update when one is bound.
fn linear_from(
    tape: &mut Tape,
    ctx: &EncodeCtx,
    h: NodeId,
    layer: usize,
    target: &str,
) -> Result<NodeId> {
    let wt = transposed(tape, ctx, &names::attn(layer, target))?;
    let mut out = tape.matmul(h, wt)?;
    if let Some(task) = ctx.task {
        let a_name = names::lora(task, layer, target, "a");
        if let Some(a) = ctx.bindings.try_get(&a_name) {
            let bmat = ctx.bindings.get(&names::lora(task, layer, target, "b"))?;
            let at = tape.transpose(a)?;
            let ha = tape.matmul(h, at)?;
            let bt = tape.transpose(bmat)?;
            let hab = tape.matmul(ha, bt)?;
            let update = tape.scale(hab, ctx.lora_scaling)?;
            out = tape.add(out, update)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 32,
            embed_dim: 8,
            layers: 1,
            heads: 2,
            ffn_dim: 16,
            max_tokens: 16,
            rope_theta: 1000.0,
            teacher_dim: 16,
            ..Default::default()
        }
    }

    #[test]
    fn output_is_unit_norm_with_model_dim() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let store = init_encoder(&cfg, &mut rng);
        let mut tape = Tape::new();
        let mut b = TapeBindings::new();
        b.bind(&mut tape, &store, false).unwrap();
        let ctx = EncodeCtx::plain(&cfg, &b);
        let id = encode(&mut tape, &ctx, &[5, 6, 7], Role::Document).unwrap();
        let v = tape.value(id);
        assert_eq!((v.rows(), v.cols()), (1, 8));
        let norm: f64 = v.data().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_input_is_domain_error() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let store = init_encoder(&cfg, &mut rng);
        let mut tape = Tape::new();
        let mut b = TapeBindings::new();
        b.bind(&mut tape, &store, false).unwrap();
        let ctx = EncodeCtx::plain(&cfg, &b);
        assert!(matches!(
            encode(&mut tape, &ctx, &[], Role::Query),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn overlength_body_truncates_from_right_keeping_prefix_and_eos() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let store = init_encoder(&cfg, &mut rng);
        // A sequence longer than the budget must produce the same embedding
        // as its explicit right-truncation.
        let long: Vec<u32> = (4..30).collect();
        let truncated: Vec<u32> = long[..cfg.max_tokens - 2].to_vec();
        let embed = |tokens: &[u32]| {
            let mut tape = Tape::new();
            let mut b = TapeBindings::new();
            b.bind(&mut tape, &store, false).unwrap();
            let ctx = EncodeCtx::plain(&cfg, &b);
            let id = encode(&mut tape, &ctx, tokens, Role::Document).unwrap();
            tape.value(id).data().to_vec()
        };
        assert_eq!(embed(&long), embed(&truncated));
    }

    #[test]
    fn zero_b_adapter_is_identity() {
        let cfg = small_cfg();
        let adapter_cfg = AdapterConfig { rank: 2, alpha: 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let store = init_encoder(&cfg, &mut rng);
        let adapter = init_adapter(&cfg, &adapter_cfg, TaskKind::Retrieval, &mut rng);

        let run = |with_adapter: bool| {
            let mut tape = Tape::new();
            let mut b = TapeBindings::new();
            b.bind(&mut tape, &store, false).unwrap();
            if with_adapter {
                b.bind(&mut tape, &adapter, false).unwrap();
            }
            let mut ctx = EncodeCtx::plain(&cfg, &b);
            if with_adapter {
                ctx.task = Some(TaskKind::Retrieval);
                ctx.lora_scaling = adapter_cfg.scaling();
            }
            let id = encode(&mut tape, &ctx, &[5, 9, 11], Role::Query).unwrap();
            tape.value(id).data().to_vec()
        };
        assert_eq!(run(false), run(true));
    }
}
