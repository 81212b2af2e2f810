//! Metrics and task harnesses.

mod harness;
mod metrics;

pub use harness::{
    chance_ndcg, read_qrels, retrieval_harness, write_qrels, write_run, Embedder,
    IdentityOracleEmbedder, ModelEmbedder, RandomEmbedder, ReprOptions, RetrievalMetrics,
};
pub use metrics::{
    classify_accuracy, map_at_k, ndcg_at_k, spearman, v_measure, AccuracyOutcome, MetricOutcome,
    Qrels, Ranking,
};
