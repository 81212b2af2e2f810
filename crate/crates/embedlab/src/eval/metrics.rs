//! Ranking, correlation, clustering, and classification metrics.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Graded relevance judgments: query id -> (doc id -> grade >= 0).
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;

/// System output: query id -> doc ids in descending score order.
pub type Ranking = BTreeMap<String, Vec<String>>;

/// Metric value plus how many queries actually contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOutcome {
    pub value: f64,
    pub evaluated: usize,
    /// Queries excluded because they have no relevant documents.
    pub skipped: usize,
}

fn dcg(grades: &[u32]) -> f64 {
    grades
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let gain = (2f64).powi(g as i32) - 1.0;
            gain / ((i + 2) as f64).log2()
        })
        .sum()
}

/// nDCG@k with gain 2^rel - 1 and discount 1/log2(rank + 1), averaged
/// over queries that have at least one relevant document.
pub fn ndcg_at_k(ranking: &Ranking, qrels: &Qrels, k: usize) -> Result<MetricOutcome> {
    if k == 0 {
        return Err(Error::Domain("ndcg_at_k: k must be >= 1".into()));
    }
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for (qid, rels) in qrels {
        let mut ideal: Vec<u32> = rels.values().copied().filter(|g| *g > 0).collect();
        if ideal.is_empty() {
            skipped += 1;
            continue;
        }
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        ideal.truncate(k);
        let idcg = dcg(&ideal);
        let got: Vec<u32> = ranking
            .get(qid)
            .map(|docs| {
                docs.iter()
                    .take(k)
                    .map(|d| rels.get(d).copied().unwrap_or(0))
                    .collect()
            })
            .unwrap_or_default();
        total += dcg(&got) / idcg;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Domain("ndcg_at_k: no query has relevant documents".into()));
    }
    Ok(MetricOutcome { value: total / evaluated as f64, evaluated, skipped })
}

/// MAP@k with binary relevance (grade > 0), normalized by
/// min(#relevant, k).
pub fn map_at_k(ranking: &Ranking, qrels: &Qrels, k: usize) -> Result<MetricOutcome> {
    if k == 0 {
        return Err(Error::Domain("map_at_k: k must be >= 1".into()));
    }
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for (qid, rels) in qrels {
        let relevant: usize = rels.values().filter(|g| **g > 0).count();
        if relevant == 0 {
            skipped += 1;
            continue;
        }
        let mut hits = 0usize;
        let mut ap = 0.0;
        if let Some(docs) = ranking.get(qid) {
            for (i, d) in docs.iter().take(k).enumerate() {
                if rels.get(d).copied().unwrap_or(0) > 0 {
                    hits += 1;
                    ap += hits as f64 / (i + 1) as f64;
                }
            }
        }
        total += ap / relevant.min(k) as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Domain("map_at_k: no query has relevant documents".into()));
    }
    Ok(MetricOutcome { value: total / evaluated as f64, evaluated, skipped })
}

/// Average ranks with ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Domain("correlation undefined for constant input".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation (Pearson over average ranks).
pub fn spearman(pred: &[f64], gold: &[f64]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!("spearman: {} vs {}", pred.len(), gold.len())));
    }
    if pred.len() < 2 {
        return Err(Error::Domain("spearman needs at least 2 points".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(gold))
}

fn entropy(counts: &BTreeMap<u32, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// V-measure: harmonic mean of homogeneity and completeness, computed
/// from conditional entropies. A zero marginal entropy makes that
/// component 1.
pub fn v_measure(labels: &[u32], clusters: &[u32]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Domain("v_measure: empty input".into()));
    }
    if labels.len() != clusters.len() {
        return Err(Error::Shape(format!(
            "v_measure: {} labels vs {} clusters",
            labels.len(),
            clusters.len()
        )));
    }
    let n = labels.len() as f64;
    let mut label_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut cluster_counts: BTreeMap<u32, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for (&l, &c) in labels.iter().zip(clusters) {
        *label_counts.entry(l).or_default() += 1;
        *cluster_counts.entry(c).or_default() += 1;
        *joint.entry((l, c)).or_default() += 1;
    }
    let h_c = entropy(&label_counts, n);
    let h_k = entropy(&cluster_counts, n);

    // H(C|K) and H(K|C) from the joint distribution.
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (&(l, c), &cnt) in &joint {
        let p = cnt as f64 / n;
        let p_c_given_k = cnt as f64 / cluster_counts[&c] as f64;
        let p_k_given_c = cnt as f64 / label_counts[&l] as f64;
        h_c_given_k -= p * p_c_given_k.ln();
        h_k_given_c -= p * p_k_given_c.ln();
    }
    let h = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let c = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    if h + c == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * h * c / (h + c))
}

/// Nearest-centroid (cosine) classification accuracy.
///
/// Test items whose label never appears in training count as misses; the
/// returned struct reports how many.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyOutcome {
    pub accuracy: f64,
    pub unseen_label_misses: usize,
}

pub fn classify_accuracy(
    train: &Matrix,
    train_labels: &[u32],
    test: &Matrix,
    test_labels: &[u32],
) -> Result<AccuracyOutcome> {
    if train.rows() != train_labels.len() || test.rows() != test_labels.len() {
        return Err(Error::Shape("classify_accuracy: label count mismatch".into()));
    }
    if train.rows() == 0 || test.rows() == 0 {
        return Err(Error::Domain("classify_accuracy: empty split".into()));
    }
    let dim = train.cols();
    let mut sums: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (r, &l) in train_labels.iter().enumerate() {
        let acc = sums.entry(l).or_insert_with(|| vec![0.0; dim]);
        for (a, v) in acc.iter_mut().zip(train.row(r)) {
            *a += v;
        }
    }
    let centroids: Vec<(u32, Vec<f64>)> = sums
        .into_iter()
        .map(|(l, mut v)| {
            let norm = crate::numerics::l2_norm(&v);
            if norm > 0.0 {
                for x in &mut v {
                    *x /= norm;
                }
            }
            (l, v)
        })
        .collect();

    let mut correct = 0usize;
    let mut unseen = 0usize;
    for (r, &label) in test_labels.iter().enumerate() {
        if !centroids.iter().any(|(l, _)| *l == label) {
            unseen += 1;
            continue;
        }
        let row = test.row(r);
        let mut best = (centroids[0].0, f64::NEG_INFINITY);
        for (l, c) in &centroids {
            let s = crate::numerics::dot(row, c);
            if s > best.1 {
                best = (*l, s);
            }
        }
        if best.0 == label {
            correct += 1;
        }
    }
    Ok(AccuracyOutcome {
        accuracy: correct as f64 / test.rows() as f64,
        unseen_label_misses: unseen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qrels_one(q: &str, docs: &[(&str, u32)]) -> Qrels {
        let mut m = Qrels::new();
        m.insert(q.into(), docs.iter().map(|(d, g)| (d.to_string(), *g)).collect());
        m
    }

    fn ranking_one(q: &str, docs: &[&str]) -> Ranking {
        let mut m = Ranking::new();
        m.insert(q.into(), docs.iter().map(|d| d.to_string()).collect());
        m
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let qrels = qrels_one("q", &[("a", 2), ("b", 1)]);
        let ranking = ranking_one("q", &["a", "b", "c"]);
        assert!((ndcg_at_k(&ranking, &qrels, 10).unwrap().value - 1.0).abs() < 1e-12);
        assert!((map_at_k(&ranking, &qrels, 10).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_relevant_at_rank_two() {
        let qrels = qrels_one("q", &[("a", 1)]);
        let ranking = ranking_one("q", &["x", "a", "y"]);
        let got = ndcg_at_k(&ranking, &qrels, 10).unwrap().value;
        assert!((got - 1.0 / 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn ndcg_at_one_with_hit() {
        let qrels = qrels_one("q", &[("a", 1)]);
        let ranking = ranking_one("q", &["a", "b"]);
        assert!((ndcg_at_k(&ranking, &qrels, 1).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_hand_value() {
        // 2 relevant at ranks 1 and 3 of 3 retrieved: (1 + 2/3) / 2.
        let qrels = qrels_one("q", &[("a", 1), ("c", 1)]);
        let ranking = ranking_one("q", &["a", "b", "c"]);
        let got = map_at_k(&ranking, &qrels, 10).unwrap().value;
        assert!((got - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn map_zero_when_nothing_relevant_retrieved() {
        let qrels = qrels_one("q", &[("z", 1)]);
        let ranking = ranking_one("q", &["a", "b", "c"]);
        assert_eq!(map_at_k(&ranking, &qrels, 3).unwrap().value, 0.0);
    }

    #[test]
    fn queries_without_relevant_docs_are_skipped_and_counted() {
        let mut qrels = qrels_one("q1", &[("a", 1)]);
        qrels.insert("q2".into(), [("b".to_string(), 0u32)].into_iter().collect());
        let mut ranking = ranking_one("q1", &["a"]);
        ranking.insert("q2".into(), vec!["a".into(), "b".into()]);
        let out = ndcg_at_k(&ranking, &qrels, 10).unwrap();
        assert_eq!(out.evaluated, 1);
        assert_eq!(out.skipped, 1);
        assert!((out.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_edges_and_hand_value() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let got = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((got - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_rejects_constant_input() {
        assert!(matches!(
            spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn v_measure_perfect_and_degenerate() {
        assert!((v_measure(&[0, 0, 1, 1], &[7, 7, 3, 3]).unwrap() - 1.0).abs() < 1e-12);
        // One cluster holding two balanced classes: homogeneity 0.
        assert_eq!(v_measure(&[0, 0, 1, 1], &[5, 5, 5, 5]).unwrap(), 0.0);
    }

    #[test]
    fn v_measure_hand_value() {
        // Entropy bookkeeping done by hand for [0,0,1,1] vs [0,1,1,1].
        let got = v_measure(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((got - 0.34370).abs() < 5e-5, "got {}", got);
    }

    #[test]
    fn nearest_centroid_separable_case() {
        let train = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let out = classify_accuracy(&train, &[0, 1], &train, &[0, 1]).unwrap();
        assert_eq!(out.accuracy, 1.0);
        assert_eq!(out.unseen_label_misses, 0);
    }

    #[test]
    fn single_class_is_always_right() {
        let train = Matrix::from_rows(&[&[1.0, 0.0], &[0.8, 0.6]]).unwrap();
        let test = Matrix::from_rows(&[&[0.0, 1.0]]).unwrap();
        let out = classify_accuracy(&train, &[3, 3], &test, &[3]).unwrap();
        assert_eq!(out.accuracy, 1.0);
    }

    #[test]
    fn unseen_test_label_counts_as_miss() {
        let train = Matrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let test = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let out = classify_accuracy(&train, &[0], &test, &[0, 9]).unwrap();
        assert_eq!(out.unseen_label_misses, 1);
        assert!((out.accuracy - 0.5).abs() < 1e-12);
    }
}
