//! The nine training objectives as pure differentiable scalar functions.
//!
//! [`graph`] holds the tape builders; this module adds batch types with
//! their invariants and eager wrappers that evaluate a loss to an f64 on
//! a scratch tape.

pub mod graph;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Projection, ProjectionSide};
use crate::numerics::{Matrix, NodeId, Tape};

pub use graph::{
    classification_loss_node, cosent_loss_node, distill_loss_node, gor_loss_node, info_nce_node,
    relational_kd_node, retrieval_loss_node, score_distill_node, sts_loss_node, ClassNodes,
    HardNegatives, PairNodes, ProjectionNodes, StsInputNodes, Temperature, TripletNodes, NEG_MASK,
};

// ── Weights ──────────────────────────────────────────────────────────

/// All scalar loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Contrastive temperature (initial value when learnable).
    pub tau: f64,
    /// Ranking-loss temperature.
    pub tau_prime: f64,
    pub lambda_nce: f64,
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub lambda_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            tau: 0.02,
            tau_prime: 0.05,
            lambda_nce: 1.0,
            lambda_d: 2.0,
            lambda_s: 1.0,
            lambda_r: 20.0,
        }
    }
}

/// Clamp range for the learnable temperature.
pub const TAU_MIN: f64 = 0.005;
pub const TAU_MAX: f64 = 1.0;

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("tau_prime", self.tau_prime),
            ("lambda_nce", self.lambda_nce),
            ("lambda_d", self.lambda_d),
            ("lambda_s", self.lambda_s),
            ("lambda_r", self.lambda_r),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("loss weight {} must be > 0, got {}", name, v)));
            }
        }
        Ok(())
    }
}

// ── Batch types ──────────────────────────────────────────────────────

fn check_unit_rows(m: &Matrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        let norm = crate::numerics::l2_norm(m.row(r));
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "{} row {} has norm {}, expected unit",
                what, r, norm
            )));
        }
    }
    Ok(())
}

/// Matched student/teacher embeddings for B pairs.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub student_x: Matrix,
    pub student_y: Matrix,
    pub teacher_x: Matrix,
    pub teacher_y: Matrix,
}

impl PairBatch {
    pub fn new(student_x: Matrix, student_y: Matrix, teacher_x: Matrix, teacher_y: Matrix) -> Result<Self> {
        let b = student_x.rows();
        if student_y.rows() != b || teacher_x.rows() != b || teacher_y.rows() != b {
            return Err(Error::Shape("pair batch sides disagree on batch size".into()));
        }
        for (m, what) in [
            (&student_x, "student_x"),
            (&student_y, "student_y"),
            (&teacher_x, "teacher_x"),
            (&teacher_y, "teacher_y"),
        ] {
            check_unit_rows(m, what)?;
        }
        Ok(PairBatch { student_x, student_y, teacher_x, teacher_y })
    }

    pub fn batch_size(&self) -> usize {
        self.student_x.rows()
    }
}

/// Queries, positives, and per-query mined hard negatives (possibly empty).
#[derive(Debug, Clone)]
pub struct TripletBatch {
    pub queries: Matrix,
    pub positives: Matrix,
    pub hard_negatives: Vec<Matrix>,
}

impl TripletBatch {
    pub fn new(queries: Matrix, positives: Matrix, hard_negatives: Vec<Matrix>) -> Result<Self> {
        let b = queries.rows();
        if positives.rows() != b || hard_negatives.len() != b {
            return Err(Error::Shape("triplet batch sides disagree on batch size".into()));
        }
        check_unit_rows(&queries, "queries")?;
        check_unit_rows(&positives, "positives")?;
        for (i, negs) in hard_negatives.iter().enumerate() {
            if negs.rows() > 0 {
                if negs.cols() != queries.cols() {
                    return Err(Error::Shape(format!("negatives of row {} have wrong dim", i)));
                }
                check_unit_rows(negs, "hard negatives")?;
                for nr in 0..negs.rows() {
                    if negs.row(nr) == positives.row(i) {
                        return Err(Error::Contract(format!(
                            "row {}'s negative set contains its own positive",
                            i
                        )));
                    }
                }
            }
        }
        Ok(TripletBatch { queries, positives, hard_negatives })
    }

    pub fn batch_size(&self) -> usize {
        self.queries.rows()
    }

    pub fn has_mined_negatives(&self) -> bool {
        self.hard_negatives.iter().any(|m| m.rows() > 0)
    }

    /// Stack all mined negatives and build the per-query membership mask.
    pub fn stack_negatives(&self) -> Option<(Matrix, Matrix)> {
        let total: usize = self.hard_negatives.iter().map(|m| m.rows()).sum();
        if total == 0 {
            return None;
        }
        let n = self.queries.cols();
        let mut stacked = Matrix::zeros(total, n);
        let mut mask = Matrix::filled(self.batch_size(), total, NEG_MASK);
        let mut row = 0;
        for (i, negs) in self.hard_negatives.iter().enumerate() {
            for r in 0..negs.rows() {
                stacked.row_mut(row).copy_from_slice(negs.row(r));
                mask.set(i, row, 0.0);
                row += 1;
            }
        }
        Some((stacked, mask))
    }
}

/// Text pairs with graded similarity scores.
#[derive(Debug, Clone)]
pub struct ScoredPairBatch {
    pub x: Matrix,
    pub y: Matrix,
    pub scores: Vec<f64>,
}

impl ScoredPairBatch {
    pub fn new(x: Matrix, y: Matrix, scores: Vec<f64>) -> Result<Self> {
        if x.rows() != y.rows() || x.rows() != scores.len() {
            return Err(Error::Shape("scored batch lengths disagree".into()));
        }
        check_unit_rows(&x, "x")?;
        check_unit_rows(&y, "y")?;
        Ok(ScoredPairBatch { x, y, scores })
    }
}

/// Anchor/positive/7-negative tuples with teacher counterparts for the
/// relational regularizer. Negatives are stacked 7B x n.
#[derive(Debug, Clone)]
pub struct ClassBatch {
    pub anchors: Matrix,
    pub positives: Matrix,
    pub negatives: Matrix,
    pub teacher_anchors: Matrix,
    pub teacher_positives: Matrix,
    pub teacher_negatives: Matrix,
}

impl ClassBatch {
    pub fn new(
        anchors: Matrix,
        positives: Matrix,
        negatives: Matrix,
        teacher_anchors: Matrix,
        teacher_positives: Matrix,
        teacher_negatives: Matrix,
    ) -> Result<Self> {
        let b = anchors.rows();
        if positives.rows() != b || negatives.rows() != 7 * b {
            return Err(Error::Shape(format!(
                "class batch needs 7 negatives per sample: {} anchors, {} negatives",
                b,
                negatives.rows()
            )));
        }
        if teacher_anchors.rows() != b
            || teacher_positives.rows() != b
            || teacher_negatives.rows() != 7 * b
        {
            return Err(Error::Shape("teacher side of class batch disagrees".into()));
        }
        for (m, what) in [(&anchors, "anchors"), (&positives, "positives"), (&negatives, "negatives")] {
            check_unit_rows(m, what)?;
        }
        Ok(ClassBatch {
            anchors,
            positives,
            negatives,
            teacher_anchors,
            teacher_positives,
            teacher_negatives,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.anchors.rows()
    }

    /// All 9B student embeddings, anchors then positives then negatives.
    pub fn student_stack(&self) -> Result<Matrix> {
        stack(&[&self.anchors, &self.positives, &self.negatives])
    }

    pub fn teacher_stack(&self) -> Result<Matrix> {
        stack(&[&self.teacher_anchors, &self.teacher_positives, &self.teacher_negatives])
    }
}

fn stack(parts: &[&Matrix]) -> Result<Matrix> {
    let cols = parts[0].cols();
    let rows = parts.iter().map(|m| m.rows()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for m in parts {
        if m.cols() != cols {
            return Err(Error::Shape("stack: column mismatch".into()));
        }
        data.extend_from_slice(m.data());
    }
    Matrix::from_vec(rows, cols, data)
}

/// Switching-objective input: the branch is the has-scores flag.
#[derive(Debug, Clone)]
pub enum StsBatch {
    Scored(ScoredPairBatch),
    Unscored { triplets: TripletBatch, teacher_queries: Matrix, teacher_positives: Matrix },
}

// ── Eager wrappers ───────────────────────────────────────────────────

fn proj_nodes(tape: &mut Tape, psi: &Projection) -> Result<ProjectionNodes> {
    let w = tape.constant(psi.w.clone())?;
    let b = tape.constant(psi.b.clone())?;
    Ok(ProjectionNodes { w, b, side: psi.side })
}

fn pair_nodes(tape: &mut Tape, batch: &PairBatch) -> Result<PairNodes> {
    Ok(PairNodes {
        student_x: tape.constant(batch.student_x.clone())?,
        student_y: tape.constant(batch.student_y.clone())?,
        teacher_x: tape.constant(batch.teacher_x.clone())?,
        teacher_y: tape.constant(batch.teacher_y.clone())?,
    })
}

fn triplet_nodes(tape: &mut Tape, batch: &TripletBatch) -> Result<TripletNodes> {
    let queries = tape.constant(batch.queries.clone())?;
    let positives = tape.constant(batch.positives.clone())?;
    let hard = match batch.stack_negatives() {
        None => None,
        Some((stacked, mask)) => {
            let stacked = tape.constant(stacked)?;
            Some(HardNegatives { stacked, mask })
        }
    };
    Ok(TripletNodes { queries, positives, hard })
}

/// Eq.-style distillation loss (a batch sum, in [0, 4B]).
pub fn distill_loss(batch: &PairBatch, psi: &Projection) -> Result<f64> {
    let mut tape = Tape::new();
    let pair = pair_nodes(&mut tape, batch)?;
    let proj = proj_nodes(&mut tape, psi)?;
    let id = distill_loss_node(&mut tape, &pair, &proj)?;
    tape.scalar_value(id)
}

/// Contrastive loss with in-batch plus mined negatives.
pub fn info_nce(batch: &TripletBatch, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let nodes = triplet_nodes(&mut tape, batch)?;
    let id = info_nce_node(&mut tape, &nodes, &Temperature::Fixed(tau))?;
    tape.scalar_value(id)
}

/// Spread-out regularizer over query and positive batches.
pub fn gor_loss(queries: &Matrix, positives: &Matrix) -> Result<f64> {
    check_unit_rows(queries, "queries")?;
    check_unit_rows(positives, "positives")?;
    let mut tape = Tape::new();
    let q = tape.constant(queries.clone())?;
    let p = tape.constant(positives.clone())?;
    let id = gor_loss_node(&mut tape, q, p)?;
    tape.scalar_value(id)
}

/// Combined retrieval objective over a triplet batch with its teacher
/// pair view.
pub fn retrieval_loss(
    batch: &TripletBatch,
    pair_view: &PairBatch,
    weights: &LossWeights,
    psi: &Projection,
) -> Result<f64> {
    weights.validate()?;
    let mut tape = Tape::new();
    let nodes = triplet_nodes(&mut tape, batch)?;
    let pair = pair_nodes(&mut tape, pair_view)?;
    let proj = proj_nodes(&mut tape, psi)?;
    let id = retrieval_loss_node(
        &mut tape,
        &nodes,
        &pair,
        &proj,
        weights,
        &Temperature::Fixed(weights.tau),
    )?;
    tape.scalar_value(id)
}

/// Listwise ranking loss; zero when no score-ordered pair exists.
pub fn cosent_loss(batch: &ScoredPairBatch, tau_prime: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(batch.x.clone())?;
    let y = tape.constant(batch.y.clone())?;
    let id = cosent_loss_node(&mut tape, x, y, &batch.scores, tau_prime)?;
    tape.scalar_value(id)
}

/// Switching objective: CoSENT when scored, contrastive + distillation
/// otherwise.
pub fn sts_loss(batch: &StsBatch, weights: &LossWeights, psi: &Projection) -> Result<f64> {
    weights.validate()?;
    let mut tape = Tape::new();
    let id = match batch {
        StsBatch::Scored(scored) => {
            let x = tape.constant(scored.x.clone())?;
            let y = tape.constant(scored.y.clone())?;
            sts_loss_node(
                &mut tape,
                &StsInputNodes::Scored { x, y, scores: &scored.scores },
                weights,
                &Temperature::Fixed(weights.tau),
            )?
        }
        StsBatch::Unscored { triplets, teacher_queries, teacher_positives } => {
            let nodes = triplet_nodes(&mut tape, triplets)?;
            let pair = PairNodes {
                student_x: nodes.queries,
                student_y: nodes.positives,
                teacher_x: tape.constant(teacher_queries.clone())?,
                teacher_y: tape.constant(teacher_positives.clone())?,
            };
            let proj = proj_nodes(&mut tape, psi)?;
            sts_loss_node(
                &mut tape,
                &StsInputNodes::Unscored { batch: &nodes, pair: &pair, proj: &proj },
                weights,
                &Temperature::Fixed(weights.tau),
            )?
        }
    };
    tape.scalar_value(id)
}

/// Bi-directional contrastive classification loss.
pub fn classification_loss(batch: &ClassBatch, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let class = ClassNodes {
        anchors: tape.constant(batch.anchors.clone())?,
        positives: tape.constant(batch.positives.clone())?,
        negatives: tape.constant(batch.negatives.clone())?,
    };
    let id = classification_loss_node(&mut tape, &class, &Temperature::Fixed(tau))?;
    tape.scalar_value(id)
}

/// Relational structure-matching regularizer.
pub fn relational_kd(student: &Matrix, teacher: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let s = tape.constant(student.clone())?;
    let t = tape.constant(teacher.clone())?;
    let id = relational_kd_node(&mut tape, s, t)?;
    tape.scalar_value(id)
}

/// Softmax-MSE score distillation.
pub fn score_distill_loss(batch: &PairBatch, tau: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let pair = pair_nodes(&mut tape, batch)?;
    let id = score_distill_node(&mut tape, &pair, tau, true)?;
    tape.scalar_value(id)
}

/// Helper used across the crate and its tests: L2-normalize each row of a
/// raw matrix.
pub fn unit_rows(m: &Matrix) -> Result<Matrix> {
    m.row_l2_normalized()
}

#[allow(unused)]
pub(crate) fn scalar_node(tape: &mut Tape, v: f64) -> Result<NodeId> {
    tape.constant(Matrix::scalar(v))
}
