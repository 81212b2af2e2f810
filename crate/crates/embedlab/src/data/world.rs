//! Seeded synthetic corpora.
//!
//! Texts are drawn from per-topic multinomials over a shared vocabulary:
//! a fixed fraction of probability mass sits on stopwords common to all
//! topics, the rest on the topic's own word block. Hard negatives come
//! from adjacent topics, so they share surface (stopword) tokens while
//! differing in topic.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::records::{ClassRecord, PairRecord, ScoredRecord, TripletRecord};
use crate::error::{Error, Result};
use crate::model::tokenizer::{Tokenizer, CONTENT_BASE};

/// Generation parameters; corpora are pure functions of this struct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    pub topics: usize,
    pub vocab_size: usize,
    pub stopword_count: usize,
    /// Probability mass shared across topics via stopwords.
    pub stopword_mass: f64,
    pub query_len: (usize, usize),
    pub doc_len: (usize, usize),
    pub long_doc_len: (usize, usize),
    /// Mined hard negatives per retrieval triplet.
    pub negatives_per_query: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            topics: 16,
            vocab_size: 512,
            stopword_count: 64,
            stopword_mass: 0.4,
            query_len: (4, 8),
            doc_len: (16, 32),
            long_doc_len: (512, 2048),
            negatives_per_query: 3,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let content = self.vocab_size.saturating_sub(CONTENT_BASE as usize);
        if self.topics < 2 {
            return Err(Error::Config("world needs at least 2 topics".into()));
        }
        if self.stopword_count + self.topics > content {
            return Err(Error::Config(format!(
                "vocab too small: {} content words for {} stopwords + {} topics",
                content, self.stopword_count, self.topics
            )));
        }
        if !(0.0..1.0).contains(&self.stopword_mass) {
            return Err(Error::Config("stopword_mass must be in [0, 1)".into()));
        }
        for (name, (lo, hi)) in [
            ("query_len", self.query_len),
            ("doc_len", self.doc_len),
            ("long_doc_len", self.long_doc_len),
        ] {
            if lo == 0 || hi < lo {
                return Err(Error::Config(format!("bad {} range ({}, {})", name, lo, hi)));
            }
        }
        Ok(())
    }
}

/// Topic-structured text sampler.
pub struct SyntheticWorld {
    cfg: WorldConfig,
    stopwords: Vec<u32>,
    topic_words: Vec<Vec<u32>>,
}

impl SyntheticWorld {
    pub fn new(cfg: WorldConfig) -> Result<Self> {
        cfg.validate()?;
        let content: Vec<u32> = (CONTENT_BASE..cfg.vocab_size as u32).collect();
        let stopwords = content[..cfg.stopword_count].to_vec();
        let rest = &content[cfg.stopword_count..];
        let per_topic = rest.len() / cfg.topics;
        let topic_words = (0..cfg.topics)
            .map(|t| rest[t * per_topic..(t + 1) * per_topic].to_vec())
            .collect();
        Ok(SyntheticWorld { cfg, stopwords, topic_words })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn topics(&self) -> usize {
        self.cfg.topics
    }

    fn rng(&self, domain: u64, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ salt);
        rng.set_stream(domain);
        rng
    }

    fn sample_len<R: Rng>(range: (usize, usize), rng: &mut R) -> usize {
        rng.gen_range(range.0..=range.1)
    }

    /// Draw `len` tokens from topic `t`'s multinomial.
    pub fn sample_tokens<R: Rng>(&self, topic: usize, len: usize, rng: &mut R) -> Vec<u32> {
        (0..len)
            .map(|_| {
                if rng.gen::<f64>() < self.cfg.stopword_mass {
                    *self.stopwords.choose(rng).expect("stopwords nonempty")
                } else {
                    *self.topic_words[topic].choose(rng).expect("topic words nonempty")
                }
            })
            .collect()
    }

    pub fn render(tokens: &[u32]) -> String {
        tokens.iter().map(|t| Tokenizer::word(*t)).collect::<Vec<_>>().join(" ")
    }

    fn sample_text<R: Rng>(&self, topic: usize, range: (usize, usize), rng: &mut R) -> String {
        let len = Self::sample_len(range, rng);
        Self::render(&self.sample_tokens(topic, len, rng))
    }

    /// Topics adjacent to `t` on the topic ring, nearest first.
    fn adjacent_topics(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.cfg.topics;
        (1..n).flat_map(move |d| [(t + d) % n, (t + n - d) % n]).filter(move |x| *x != t)
    }

    /// Retrieval triplets: short query and positive from one topic, hard
    /// negatives from adjacent topics.
    pub fn gen_retrieval(&self, size: usize, salt: u64) -> Result<Vec<TripletRecord>> {
        if size == 0 {
            return Err(Error::Domain("gen_retrieval: size must be >= 1".into()));
        }
        if self.cfg.topics < 2 {
            return Err(Error::Domain("gen_retrieval: need >= 2 topics for negatives".into()));
        }
        let mut rng = self.rng(0x11, salt);
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            let topic = rng.gen_range(0..self.cfg.topics);
            let q = self.sample_text(topic, self.cfg.query_len, &mut rng);
            let d_pos = self.sample_text(topic, self.cfg.doc_len, &mut rng);
            let negs: Vec<String> = self
                .adjacent_topics(topic)
                .take(self.cfg.negatives_per_query)
                .map(|nt| self.sample_text(nt, self.cfg.doc_len, &mut rng))
                .collect();
            out.push(TripletRecord { q, d_pos, d_negs: negs, topic: topic as u32 });
        }
        Ok(out)
    }

    /// Long-document pairs for the long-context phase.
    pub fn gen_long_pairs(&self, size: usize, salt: u64) -> Result<Vec<PairRecord>> {
        if size == 0 {
            return Err(Error::Domain("gen_long_pairs: size must be >= 1".into()));
        }
        let mut rng = self.rng(0x12, salt);
        Ok((0..size)
            .map(|_| {
                let topic = rng.gen_range(0..self.cfg.topics);
                PairRecord {
                    q: self.sample_text(topic, self.cfg.query_len, &mut rng),
                    d: self.sample_text(topic, self.cfg.long_doc_len, &mut rng),
                }
            })
            .collect())
    }

    /// Short query/document pairs (stage-1 distillation data).
    pub fn gen_pairs(&self, size: usize, salt: u64) -> Result<Vec<PairRecord>> {
        if size == 0 {
            return Err(Error::Domain("gen_pairs: size must be >= 1".into()));
        }
        let mut rng = self.rng(0x13, salt);
        Ok((0..size)
            .map(|_| {
                let topic = rng.gen_range(0..self.cfg.topics);
                PairRecord {
                    q: self.sample_text(topic, self.cfg.query_len, &mut rng),
                    d: self.sample_text(topic, self.cfg.doc_len, &mut rng),
                }
            })
            .collect())
    }

    /// Scored pairs: score s in 0..=5 sets the topic-mixture rate of the
    /// second text, so ordering is recoverable from token overlap. Score
    /// 5 duplicates the text exactly.
    pub fn gen_scored_pairs(&self, size: usize, salt: u64) -> Result<Vec<ScoredRecord>> {
        if size == 0 {
            return Err(Error::Domain("gen_scored_pairs: size must be >= 1".into()));
        }
        let mut rng = self.rng(0x14, salt);
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            let t1 = rng.gen_range(0..self.cfg.topics);
            let mut t2 = rng.gen_range(0..self.cfg.topics);
            while t2 == t1 {
                t2 = rng.gen_range(0..self.cfg.topics);
            }
            let score = rng.gen_range(0..=5u32);
            let a_tokens = {
                let len = Self::sample_len(self.cfg.doc_len, &mut rng);
                self.sample_tokens(t1, len, &mut rng)
            };
            let b = if score == 5 {
                Self::render(&a_tokens)
            } else {
                let rho = score as f64 / 5.0;
                let len = Self::sample_len(self.cfg.doc_len, &mut rng);
                let tokens: Vec<u32> = (0..len)
                    .map(|_| {
                        let topic = if rng.gen::<f64>() < rho { t1 } else { t2 };
                        self.sample_tokens(topic, 1, &mut rng)[0]
                    })
                    .collect();
                Self::render(&tokens)
            };
            out.push(ScoredRecord { a: Self::render(&a_tokens), b, score: score as f64 });
        }
        Ok(out)
    }

    /// Classification 9-tuples: anchor/positive share a topic label, the
    /// seven negatives carry seven distinct other labels.
    pub fn gen_class_tuples(&self, size: usize, salt: u64) -> Result<Vec<ClassRecord>> {
        if size == 0 {
            return Err(Error::Domain("gen_class_tuples: size must be >= 1".into()));
        }
        if self.cfg.topics < 8 {
            return Err(Error::Domain(format!(
                "gen_class_tuples: need >= 8 topics, have {}",
                self.cfg.topics
            )));
        }
        let mut rng = self.rng(0x15, salt);
        let mut out = Vec::with_capacity(size);
        for _ in 0..size {
            let label = rng.gen_range(0..self.cfg.topics);
            let anchor = self.sample_text(label, self.cfg.doc_len, &mut rng);
            let positive = self.sample_text(label, self.cfg.doc_len, &mut rng);
            let mut others: Vec<usize> = (0..self.cfg.topics).filter(|t| *t != label).collect();
            others.shuffle(&mut rng);
            let negatives: Vec<String> = others[..7]
                .iter()
                .map(|t| self.sample_text(*t, self.cfg.doc_len, &mut rng))
                .collect();
            out.push(ClassRecord { anchor, positive, negatives, label: label as u32 });
        }
        Ok(out)
    }

    /// Clustering-style labeled documents (for V-measure evaluation).
    pub fn gen_labeled_docs(&self, size: usize, salt: u64) -> Vec<(String, u32)> {
        let mut rng = self.rng(0x16, salt);
        (0..size)
            .map(|_| {
                let topic = rng.gen_range(0..self.cfg.topics);
                (self.sample_text(topic, self.cfg.doc_len, &mut rng), topic as u32)
            })
            .collect()
    }

    /// Bag-of-words maximum-likelihood topic classifier; the independent
    /// oracle for generator tests.
    pub fn classify_tokens(&self, tokens: &[u32]) -> usize {
        let mut best = (0usize, f64::NEG_INFINITY);
        for t in 0..self.cfg.topics {
            let mut ll = 0.0;
            for tok in tokens {
                ll += self.token_log_prob(t, *tok);
            }
            if ll > best.1 {
                best = (t, ll);
            }
        }
        best.0
    }

    fn token_log_prob(&self, topic: usize, token: u32) -> f64 {
        let stop_p = self.cfg.stopword_mass / self.stopwords.len() as f64;
        let topic_p = (1.0 - self.cfg.stopword_mass) / self.topic_words[topic].len() as f64;
        if self.stopwords.contains(&token) {
            stop_p.ln()
        } else if self.topic_words[topic].contains(&token) {
            topic_p.ln()
        } else {
            // Token from another topic: smooth heavily.
            (1e-12f64).ln()
        }
    }
}

/// A self-retrieval-free evaluation fixture: queries with qrels over a
/// corpus of positives plus hard-negative distractors.
pub struct RetrievalFixture {
    pub corpus: Vec<(String, String)>,
    pub queries: Vec<(String, String)>,
    pub qrels: crate::eval::Qrels,
}

/// Build an evaluation set from generated triplets.
pub fn retrieval_fixture(world: &SyntheticWorld, queries: usize, salt: u64) -> Result<RetrievalFixture> {
    let records = world.gen_retrieval(queries, salt)?;
    let mut corpus = Vec::new();
    let mut qs = Vec::new();
    let mut qrels = crate::eval::Qrels::new();
    for (i, rec) in records.iter().enumerate() {
        let qid = format!("q{:04}", i);
        let did = format!("d{:04}", i);
        qs.push((qid.clone(), rec.q.clone()));
        corpus.push((did.clone(), rec.d_pos.clone()));
        qrels.entry(qid).or_default().insert(did, 1);
        for (j, neg) in rec.d_negs.iter().enumerate() {
            corpus.push((format!("n{:04}-{}", i, j), neg.clone()));
        }
    }
    Ok(RetrievalFixture { corpus, queries: qs, qrels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> SyntheticWorld {
        SyntheticWorld::new(WorldConfig { seed: 7, ..Default::default() }).unwrap()
    }

    #[test]
    fn corpora_are_pure_functions_of_seed() {
        let a = world().gen_retrieval(20, 1).unwrap();
        let b = world().gen_retrieval(20, 1).unwrap();
        assert_eq!(a, b);
        let c = SyntheticWorld::new(WorldConfig { seed: 8, ..Default::default() })
            .unwrap()
            .gen_retrieval(20, 1)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn oracle_classifier_recovers_positive_topics() {
        let w = world();
        let tok = Tokenizer::new(w.config().vocab_size);
        let records = w.gen_retrieval(200, 2).unwrap();
        let mut hits = 0;
        for rec in &records {
            let predicted = w.classify_tokens(&tok.tokenize(&rec.d_pos));
            if predicted == rec.topic as usize {
                hits += 1;
            }
        }
        assert!(hits >= 190, "oracle classifier agreed on only {}/200 positives", hits);
    }

    #[test]
    fn negatives_never_share_the_query_topic() {
        let w = world();
        let tok = Tokenizer::new(w.config().vocab_size);
        for rec in w.gen_retrieval(100, 3).unwrap() {
            for neg in &rec.d_negs {
                let predicted = w.classify_tokens(&tok.tokenize(neg));
                assert_ne!(predicted, rec.topic as usize, "negative classified as query topic");
            }
        }
    }

    #[test]
    fn class_tuples_have_nine_texts_and_distinct_negative_labels() {
        let w = world();
        for rec in w.gen_class_tuples(50, 4).unwrap() {
            assert_eq!(rec.negatives.len(), 7);
        }
    }

    #[test]
    fn class_tuples_require_eight_topics() {
        let w = SyntheticWorld::new(WorldConfig { topics: 4, ..Default::default() }).unwrap();
        assert!(matches!(w.gen_class_tuples(5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn identical_scored_pairs_get_top_score() {
        let w = world();
        for rec in w.gen_scored_pairs(300, 5).unwrap() {
            if rec.a == rec.b {
                assert_eq!(rec.score, 5.0);
            }
            if rec.score == 5.0 {
                assert_eq!(rec.a, rec.b);
            }
        }
    }

    #[test]
    fn scored_pairs_score_tracks_token_overlap() {
        let w = world();
        let records = w.gen_scored_pairs(1000, 6).unwrap();
        let tok = Tokenizer::new(w.config().vocab_size);
        let overlap = |a: &str, b: &str| -> f64 {
            let ta: std::collections::BTreeSet<u32> = tok.tokenize(a).into_iter().collect();
            let tb: std::collections::BTreeSet<u32> = tok.tokenize(b).into_iter().collect();
            let inter = ta.intersection(&tb).count() as f64;
            let union = ta.union(&tb).count() as f64;
            inter / union
        };
        let overlaps: Vec<f64> = records.iter().map(|r| overlap(&r.a, &r.b)).collect();
        let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
        let rho = crate::eval::spearman(&overlaps, &scores).unwrap();
        assert!(rho >= 0.8, "overlap/score Spearman only {}", rho);
    }

    #[test]
    fn bag_of_words_baseline_solves_the_retrieval_task() {
        let w = world();
        let fixture = retrieval_fixture(&w, 64, 9).unwrap();
        let embedder = crate::eval::IdentityOracleEmbedder { dim: 64 };
        let m = crate::eval::retrieval_harness(
            &embedder,
            &fixture.corpus,
            &fixture.queries,
            &fixture.qrels,
            &crate::eval::ReprOptions::default(),
            10,
        )
        .unwrap();
        assert!(m.ndcg.value >= 0.5, "BoW baseline nDCG@10 = {}", m.ndcg.value);
    }
}
