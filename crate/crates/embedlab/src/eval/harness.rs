//! Retrieval evaluation harness: encode, optionally truncate/binarize,
//! score exhaustively, rank with deterministic tie-breaks, and compute
//! ranking metrics. Includes reference embedders and a permutation
//! oracle for the expected-at-chance score.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::metrics::{map_at_k, ndcg_at_k, MetricOutcome, Qrels, Ranking};
use crate::model::{ModelState, Role, TaskKind};
use crate::numerics::dot;
use crate::repr::{binarize, binary_similarity, truncate, TruncationSpec};

/// Anything that can turn text into an embedding.
pub trait Embedder: Sync {
    fn embed(&self, text: &str, role: Role) -> Result<Vec<f64>>;
    fn dim(&self) -> usize;
}

/// The student model, optionally with a task adapter and inference-time
/// rotary base.
pub struct ModelEmbedder<'a> {
    pub model: &'a ModelState,
    pub task: Option<TaskKind>,
    pub rope_theta: Option<f64>,
    pub max_tokens: Option<usize>,
}

impl<'a> ModelEmbedder<'a> {
    pub fn new(model: &'a ModelState, task: Option<TaskKind>) -> Self {
        ModelEmbedder { model, task, rope_theta: None, max_tokens: None }
    }
}

impl Embedder for ModelEmbedder<'_> {
    fn embed(&self, text: &str, role: Role) -> Result<Vec<f64>> {
        let tok = crate::model::tokenizer::Tokenizer::new(self.model.cfg.vocab_size);
        let tokens = tok.tokenize(text);
        self.model
            .encode_eager(self.task, &tokens, role, self.rope_theta, self.max_tokens)
    }

    fn dim(&self) -> usize {
        self.model.cfg.embed_dim
    }
}

/// Bag-of-words hash embedder: identical texts get identical embeddings,
/// so self-retrieval fixtures score a perfect nDCG.
pub struct IdentityOracleEmbedder {
    pub dim: usize,
}

impl Embedder for IdentityOracleEmbedder {
    fn embed(&self, text: &str, _role: Role) -> Result<Vec<f64>> {
        let mut v = vec![0.0f64; self.dim];
        for word in text.split_whitespace() {
            let mut h = 0xcbf29ce484222325u64;
            for b in word.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            v[(h % self.dim as u64) as usize] += 1.0;
            v[(h >> 32) as usize % self.dim] += if h & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = crate::numerics::l2_norm(&v);
        if norm == 0.0 {
            return Err(Error::Domain("identity oracle: empty text".into()));
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Seeded random unit embeddings, constant per (text, role): the
/// no-information baseline.
pub struct RandomEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Embedder for RandomEmbedder {
    fn embed(&self, text: &str, role: Role) -> Result<Vec<f64>> {
        let mut h = self.seed ^ 0x9e3779b97f4a7c15;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^= role.prefix_str().len() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let normal = rand_distr::Normal::new(0.0f64, 1.0).expect("unit std");
        let v: Vec<f64> = (0..self.dim)
            .map(|_| rand_distr::Distribution::sample(&normal, &mut rng))
            .collect();
        let norm = crate::numerics::l2_norm(&v);
        Ok(v.into_iter().map(|x| x / norm).collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Representation options applied after encoding.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReprOptions {
    /// Truncate embeddings to this dimension (renormalized).
    pub dim: Option<usize>,
    /// Score with sign bits and the Hamming kernel.
    pub binary: bool,
}

#[derive(Debug, Clone)]
pub struct RetrievalMetrics {
    pub ndcg: MetricOutcome,
    pub map: MetricOutcome,
    pub k: usize,
}

fn worker_threads() -> usize {
    std::env::var("EMBEDLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .unwrap_or(1)
}

fn embed_all(
    embedder: &dyn Embedder,
    items: &[(String, String)],
    role: Role,
    opts: &ReprOptions,
) -> Result<Vec<Vec<f64>>> {
    let encode_one = |text: &str| -> Result<Vec<f64>> {
        let e = embedder.embed(text, role)?;
        match opts.dim {
            Some(d) => truncate(&e, &TruncationSpec::new(d)),
            None => Ok(e),
        }
    };
    let threads = worker_threads().min(items.len().max(1));
    if threads <= 1 {
        return items.iter().map(|(_, text)| encode_one(text)).collect();
    }
    // Deterministic regardless of thread count: slot i always holds item i.
    let mut slots: Vec<Option<Result<Vec<f64>>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        for (chunk_idx, (item_chunk, slot_chunk)) in
            items.chunks(chunk).zip(slots.chunks_mut(chunk)).enumerate()
        {
            let _ = chunk_idx;
            scope.spawn(move || {
                for ((_, text), slot) in item_chunk.iter().zip(slot_chunk.iter_mut()) {
                    *slot = Some(encode_one(text));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every slot filled"))
        .collect()
}

/// Encode queries and corpus with their roles, score every pair, rank
/// with ties broken by ascending doc id, and compute nDCG/MAP at `k`.
pub fn retrieval_harness(
    embedder: &dyn Embedder,
    corpus: &[(String, String)],
    queries: &[(String, String)],
    qrels: &Qrels,
    opts: &ReprOptions,
    k: usize,
) -> Result<RetrievalMetrics> {
    for qid in qrels.keys() {
        if !queries.iter().any(|(id, _)| id == qid) {
            return Err(Error::Contract(format!("qrels references unknown query id {}", qid)));
        }
    }
    for rels in qrels.values() {
        for did in rels.keys() {
            if !corpus.iter().any(|(id, _)| id == did) {
                return Err(Error::Contract(format!("qrels references unknown doc id {}", did)));
            }
        }
    }
    let doc_embs = embed_all(embedder, corpus, Role::Document, opts)?;
    let query_embs = embed_all(embedder, queries, Role::Query, opts)?;

    let binary_docs: Vec<_> = if opts.binary {
        doc_embs.iter().map(|e| binarize(e)).collect()
    } else {
        Vec::new()
    };

    let mut ranking = Ranking::new();
    for ((qid, _), qe) in queries.iter().zip(&query_embs) {
        let mut scored: Vec<(f64, &str)> = Vec::with_capacity(corpus.len());
        if opts.binary {
            let qb = binarize(qe);
            for ((did, _), db) in corpus.iter().zip(&binary_docs) {
                scored.push((binary_similarity(&qb, db)?, did));
            }
        } else {
            for ((did, _), de) in corpus.iter().zip(&doc_embs) {
                scored.push((dot(qe, de), did));
            }
        }
        scored.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("scores are finite")
                .then_with(|| a.1.cmp(b.1))
        });
        ranking.insert(qid.clone(), scored.into_iter().map(|(_, d)| d.to_string()).collect());
    }

    Ok(RetrievalMetrics {
        ndcg: ndcg_at_k(&ranking, qrels, k)?,
        map: map_at_k(&ranking, qrels, k)?,
        k,
    })
}

/// Expected nDCG@k of a uniformly random ranking: the built-in
/// permutation oracle used for chance baselines.
pub fn chance_ndcg(
    corpus_ids: &[String],
    qrels: &Qrels,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..trials {
        let mut ids = corpus_ids.to_vec();
        ids.shuffle(&mut rng);
        let ranking: Ranking = qrels.keys().map(|q| (q.clone(), ids.clone())).collect();
        total += ndcg_at_k(&ranking, qrels, k)?.value;
    }
    Ok(total / trials as f64)
}

// ── TREC-style file formats ──────────────────────────────────────────

/// Write tab-separated "query_id doc_id grade" lines.
pub fn write_qrels(path: &std::path::Path, qrels: &Qrels) -> Result<()> {
    let mut out = String::new();
    for (q, rels) in qrels {
        for (d, g) in rels {
            out.push_str(&format!("{}\t{}\t{}\n", q, d, g));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_qrels(path: &std::path::Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path)?;
    let mut qrels = Qrels::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::Format(format!("qrels line {}: expected 3 fields", lineno + 1)));
        }
        let grade: u32 = parts[2]
            .parse()
            .map_err(|_| Error::Format(format!("qrels line {}: bad grade", lineno + 1)))?;
        let prev = qrels
            .entry(parts[0].to_string())
            .or_default()
            .insert(parts[1].to_string(), grade);
        if prev.is_some() {
            return Err(Error::Format(format!(
                "qrels line {}: duplicate doc id {} for query {}",
                lineno + 1,
                parts[1],
                parts[0]
            )));
        }
    }
    Ok(qrels)
}

/// Write tab-separated "query_id doc_id score" lines in rank order.
pub fn write_run(path: &std::path::Path, run: &[(String, String, f64)]) -> Result<()> {
    let mut out = String::new();
    for (q, d, s) in run {
        out.push_str(&format!("{}\t{}\t{}\n", q, d, s));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn self_retrieval_fixture(n: usize) -> (Vec<(String, String)>, Vec<(String, String)>, Qrels) {
        let corpus: Vec<(String, String)> = (0..n)
            .map(|i| (format!("d{}", i), format!("w{:03} w{:03} w{:03}", 10 + i, 40 + i, 70 + i)))
            .collect();
        let queries: Vec<(String, String)> =
            corpus.iter().map(|(id, text)| (id.replace('d', "q"), text.clone())).collect();
        let mut qrels = Qrels::new();
        for i in 0..n {
            qrels
                .entry(format!("q{}", i))
                .or_default()
                .insert(format!("d{}", i), 1);
        }
        (corpus, queries, qrels)
    }

    #[test]
    fn identity_oracle_self_retrieval_is_perfect() {
        let (corpus, queries, qrels) = self_retrieval_fixture(8);
        let embedder = IdentityOracleEmbedder { dim: 32 };
        let m = retrieval_harness(&embedder, &corpus, &queries, &qrels, &ReprOptions::default(), 10)
            .unwrap();
        assert_eq!(m.ndcg.value, 1.0);
        assert_eq!(m.map.value, 1.0);
    }

    #[test]
    fn random_embedder_scores_near_chance() {
        let (corpus, queries, qrels) = self_retrieval_fixture(48);
        let embedder = RandomEmbedder { dim: 32, seed: 5 };
        let m = retrieval_harness(&embedder, &corpus, &queries, &qrels, &ReprOptions::default(), 10)
            .unwrap();
        let ids: Vec<String> = corpus.iter().map(|(id, _)| id.clone()).collect();
        let chance = chance_ndcg(&ids, &qrels, 10, 300, 11).unwrap();
        assert!(
            (m.ndcg.value - chance).abs() < 0.1,
            "random embedder {} vs chance {}",
            m.ndcg.value,
            chance
        );
    }

    #[test]
    fn unknown_ids_are_contract_errors() {
        let (corpus, queries, mut qrels) = self_retrieval_fixture(3);
        qrels.entry("q0".into()).or_default().insert("missing".into(), 1);
        let embedder = IdentityOracleEmbedder { dim: 16 };
        assert!(matches!(
            retrieval_harness(&embedder, &corpus, &queries, &qrels, &ReprOptions::default(), 10),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn qrels_round_trip() {
        let (_, _, qrels) = self_retrieval_fixture(4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("qrels.tsv");
        write_qrels(&path, &qrels).unwrap();
        assert_eq!(read_qrels(&path).unwrap(), qrels);
    }
}
