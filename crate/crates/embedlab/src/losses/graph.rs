//! Tape-level loss builders.
//!
//! Every builder appends nodes to a caller-owned tape and returns the
//! scalar loss node, so the same code path serves eager evaluation,
//! gradient checks, and training.

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::ProjectionSide;
use crate::numerics::{Matrix, NodeId, Tape};

/// Additive mask value for padded hard-negative slots. exp(x - max)
/// underflows to exactly zero for any realistic row maximum.
pub const NEG_MASK: f64 = -1.0e30;

/// Contrastive temperature: fixed, or a learnable 1x1 log-parameter node.
#[derive(Debug, Clone, Copy)]
pub enum Temperature {
    Fixed(f64),
    /// Node holding ln(tau).
    LogParam(NodeId),
}

impl Temperature {
    /// Multiply a node by 1/tau.
    fn apply(&self, tape: &mut Tape, m: NodeId) -> Result<NodeId> {
        match self {
            Temperature::Fixed(tau) => {
                if *tau <= 0.0 {
                    return Err(Error::Domain(format!("temperature must be > 0, got {}", tau)));
                }
                tape.scale(m, 1.0 / tau)
            }
            Temperature::LogParam(log_tau) => {
                let neg = tape.scale(*log_tau, -1.0)?;
                let inv = tape.exp(neg)?;
                tape.scale_by_scalar(m, inv)
            }
        }
    }
}

/// Student/teacher embeddings for a batch of (x, y) pairs.
#[derive(Debug, Clone, Copy)]
pub struct PairNodes {
    pub student_x: NodeId,
    pub student_y: NodeId,
    pub teacher_x: NodeId,
    pub teacher_y: NodeId,
}

/// Projection tensors on the tape.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionNodes {
    /// out_dim x in_dim.
    pub w: NodeId,
    /// 1 x out_dim.
    pub b: NodeId,
    pub side: ProjectionSide,
}

/// Mined hard negatives, stacked into one matrix with an additive mask
/// marking which rows belong to which query.
#[derive(Debug, Clone)]
pub struct HardNegatives {
    /// K x n, all queries' negatives concatenated.
    pub stacked: NodeId,
    /// B x K: 0.0 where negative j belongs to query i, NEG_MASK elsewhere.
    pub mask: Matrix,
}

/// Queries, matching documents, and optional mined negatives.
#[derive(Debug, Clone)]
pub struct TripletNodes {
    pub queries: NodeId,
    pub positives: NodeId,
    pub hard: Option<HardNegatives>,
}

/// Anchor / positive / stacked-negative embeddings of a classification
/// batch (negatives are 7B x n, row i*7+j is sample i's j-th negative).
#[derive(Debug, Clone, Copy)]
pub struct ClassNodes {
    pub anchors: NodeId,
    pub positives: NodeId,
    pub negatives: NodeId,
}

// ── Shared pieces ────────────────────────────────────────────────────

/// Row-normalized a times row-normalized b transposed: full cosine
/// similarity matrix.
fn cos_matrix(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let na = tape.row_l2_normalize(a)?;
    let nb = tape.row_l2_normalize(b)?;
    let nbt = tape.transpose(nb)?;
    tape.matmul(na, nbt)
}

/// 1 - x, elementwise.
fn one_minus(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let neg = tape.scale(x, -1.0)?;
    tape.add_const(neg, 1.0)
}

/// Column vector of the diagonal of a (not necessarily square) matrix,
/// reading entry (i, i) for each row i.
fn diag_column(tape: &mut Tape, m: NodeId) -> Result<NodeId> {
    let v = tape.value(m);
    let (rows, cols) = (v.rows(), v.cols());
    if cols < rows {
        return Err(Error::Shape(format!("diag_column on {}x{} matrix", rows, cols)));
    }
    let mut sel = Matrix::zeros(rows, cols);
    for i in 0..rows {
        sel.set(i, i, 1.0);
    }
    let sel = tape.constant(sel)?;
    let picked = tape.mul(m, sel)?;
    tape.sum_rows(picked)
}

/// Apply the projection to a batch of row vectors: Z W^T + b.
fn project_rows(tape: &mut Tape, z: NodeId, proj: &ProjectionNodes) -> Result<NodeId> {
    let wt = tape.transpose(proj.w)?;
    let zw = tape.matmul(z, wt)?;
    tape.add_row_broadcast(zw, proj.b)
}

/// Mean InfoNCE over rows given the already temperature-scaled logits and
/// the positive located on the diagonal of the in-batch block.
fn nce_from_logits(
    tape: &mut Tape,
    in_batch: NodeId,
    extra: Option<NodeId>,
) -> Result<NodeId> {
    let b = tape.value(in_batch).rows();
    let full = match extra {
        Some(e) => tape.concat_cols(in_batch, e)?,
        None => in_batch,
    };
    let den = tape.log_sum_exp_row(full)?;
    let num = diag_column(tape, in_batch)?;
    let per_row = tape.sub(den, num)?;
    let total = tape.sum(per_row)?;
    tape.scale(total, 1.0 / b as f64)
}

// ── The nine objectives ──────────────────────────────────────────────

/// Sum over the batch of cosine distances between projected student
/// embeddings and teacher embeddings, for both pair sides.
pub fn distill_loss_node(
    tape: &mut Tape,
    pair: &PairNodes,
    proj: &ProjectionNodes,
) -> Result<NodeId> {
    let (ax, tx, ay, ty) = match proj.side {
        ProjectionSide::StudentSide => {
            let px = project_rows(tape, pair.student_x, proj)?;
            let py = project_rows(tape, pair.student_y, proj)?;
            (px, pair.teacher_x, py, pair.teacher_y)
        }
        ProjectionSide::TeacherSide => {
            let px = project_rows(tape, pair.teacher_x, proj)?;
            let py = project_rows(tape, pair.teacher_y, proj)?;
            (pair.student_x, px, pair.student_y, py)
        }
    };
    let cx = tape.cosine_rows(ax, tx)?;
    let cy = tape.cosine_rows(ay, ty)?;
    let dx = one_minus(tape, cx)?;
    let dy = one_minus(tape, cy)?;
    let sx = tape.sum(dx)?;
    let sy = tape.sum(dy)?;
    tape.add(sx, sy)
}

/// InfoNCE with in-batch negatives plus optional mined hard negatives.
pub fn info_nce_node(tape: &mut Tape, batch: &TripletNodes, temp: &Temperature) -> Result<NodeId> {
    let sims = cos_matrix(tape, batch.queries, batch.positives)?;
    let logits = temp.apply(tape, sims)?;
    let extra = match &batch.hard {
        None => None,
        Some(h) => {
            let hsims = cos_matrix(tape, batch.queries, h.stacked)?;
            let hlogits = temp.apply(tape, hsims)?;
            let mask = tape.constant(h.mask.clone())?;
            Some(tape.add(hlogits, mask)?)
        }
    };
    nce_from_logits(tape, logits, extra)
}

/// Mean squared pairwise inner products over ordered non-matching pairs,
/// for queries and positives separately.
pub fn gor_loss_node(tape: &mut Tape, queries: NodeId, positives: NodeId) -> Result<NodeId> {
    let b = tape.value(queries).rows();
    if b < 2 {
        return Err(Error::Domain(format!("gor_loss needs batch >= 2, got {}", b)));
    }
    let mut mask = Matrix::filled(b, b, 1.0);
    for i in 0..b {
        mask.set(i, i, 0.0);
    }
    let norm = 1.0 / (b * (b - 1)) as f64;
    let mut term = |tape: &mut Tape, x: NodeId| -> Result<NodeId> {
        let xt = tape.transpose(x)?;
        let gram = tape.matmul(x, xt)?;
        let sq = tape.mul(gram, gram)?;
        let mask_node = tape.constant(mask.clone())?;
        let off = tape.mul(sq, mask_node)?;
        let s = tape.sum(off)?;
        tape.scale(s, norm)
    };
    let tq = term(tape, queries)?;
    let tp = term(tape, positives)?;
    tape.add(tq, tp)
}

/// lambda_nce * NCE + lambda_d * distill + lambda_s * GOR.
pub fn retrieval_loss_node(
    tape: &mut Tape,
    batch: &TripletNodes,
    pair: &PairNodes,
    proj: &ProjectionNodes,
    weights: &LossWeights,
    temp: &Temperature,
) -> Result<NodeId> {
    let nce = info_nce_node(tape, batch, temp)?;
    let distill = distill_loss_node(tape, pair, proj)?;
    let gor = gor_loss_node(tape, batch.queries, batch.positives)?;
    let a = tape.scale(nce, weights.lambda_nce)?;
    let d = tape.scale(distill, weights.lambda_d)?;
    let s = tape.scale(gor, weights.lambda_s)?;
    let ad = tape.add(a, d)?;
    tape.add(ad, s)
}

/// Listwise ranking loss over score-ordered pairs:
/// ln(1 + sum over s_i > s_j of exp((phi_j - phi_i) / tau')).
pub fn cosent_loss_node(
    tape: &mut Tape,
    x: NodeId,
    y: NodeId,
    scores: &[f64],
    tau_prime: f64,
) -> Result<NodeId> {
    if tau_prime <= 0.0 {
        return Err(Error::Domain(format!("tau_prime must be > 0, got {}", tau_prime)));
    }
    // Cosines live in [-1, 1]; keep exp((phi_j - phi_i)/tau') representable.
    if 2.0 / tau_prime > 700.0 {
        return Err(Error::Domain(format!(
            "tau_prime {} too small for direct evaluation",
            tau_prime
        )));
    }
    let b = tape.value(x).rows();
    if scores.len() != b {
        return Err(Error::Shape(format!("{} scores for batch of {}", scores.len(), b)));
    }
    let phi = tape.cosine_rows(x, y)?;
    let ones_col = tape.constant(Matrix::filled(b, 1, 1.0))?;
    let ones_row = tape.constant(Matrix::filled(1, b, 1.0))?;
    let phi_t = tape.transpose(phi)?;
    let cols_phi = tape.matmul(ones_col, phi_t)?; // (i, j) -> phi_j
    let rows_phi = tape.matmul(phi, ones_row)?; // (i, j) -> phi_i
    let diff = tape.sub(cols_phi, rows_phi)?;
    let scaled = tape.scale(diff, 1.0 / tau_prime)?;
    let exped = tape.exp(scaled)?;
    let mut mask = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            if scores[i] > scores[j] {
                mask.set(i, j, 1.0);
            }
        }
    }
    let mask = tape.constant(mask)?;
    let masked = tape.mul(exped, mask)?;
    let total = tape.sum(masked)?;
    let shifted = tape.add_const(total, 1.0)?;
    tape.log(shifted)
}

/// Input selector for the switching objective.
pub enum StsInputNodes<'a> {
    Scored { x: NodeId, y: NodeId, scores: &'a [f64] },
    Unscored { batch: &'a TripletNodes, pair: &'a PairNodes, proj: &'a ProjectionNodes },
}

/// CoSENT when scores exist, otherwise lambda_nce * NCE + lambda_d *
/// distill (in-batch negatives cover datasets without explicit ones).
pub fn sts_loss_node(
    tape: &mut Tape,
    input: &StsInputNodes,
    weights: &LossWeights,
    temp: &Temperature,
) -> Result<NodeId> {
    match input {
        StsInputNodes::Scored { x, y, scores } => {
            cosent_loss_node(tape, *x, *y, scores, weights.tau_prime)
        }
        StsInputNodes::Unscored { batch, pair, proj } => {
            let nce = info_nce_node(tape, batch, temp)?;
            let distill = distill_loss_node(tape, pair, proj)?;
            let a = tape.scale(nce, weights.lambda_nce)?;
            let d = tape.scale(distill, weights.lambda_d)?;
            tape.add(a, d)
        }
    }
}

/// Bi-directional contrastive loss over anchor/positive/negative tuples.
/// Anchor-to-document uses all other positives and every negative as the
/// negative set; document-to-anchor uses only in-batch anchors.
pub fn classification_loss_node(
    tape: &mut Tape,
    class: &ClassNodes,
    temp: &Temperature,
) -> Result<NodeId> {
    let b = tape.value(class.anchors).rows();
    let negs = tape.value(class.negatives).rows();
    if negs != 7 * b {
        return Err(Error::Contract(format!(
            "classification batch needs 7 negatives per sample: {} anchors, {} negatives",
            b, negs
        )));
    }
    // q -> d over [positives | negatives]; sample i's positive is column i.
    let candidates = tape.concat_rows(class.positives, class.negatives)?;
    let sims_qd = cos_matrix(tape, class.anchors, candidates)?;
    let logits_qd = temp.apply(tape, sims_qd)?;
    let l_qd = nce_from_logits(tape, logits_qd, None)?;

    // d -> q over anchors only.
    let sims_dq = cos_matrix(tape, class.positives, class.anchors)?;
    let logits_dq = temp.apply(tape, sims_dq)?;
    let l_dq = nce_from_logits(tape, logits_dq, None)?;

    tape.add(l_qd, l_dq)
}

/// Relational structure matching between normalized cosine-distance
/// matrices of student and teacher batches.
pub fn relational_kd_node(tape: &mut Tape, student: NodeId, teacher: NodeId) -> Result<NodeId> {
    let m = tape.value(student).rows();
    if m < 2 {
        return Err(Error::Domain(format!("relational_kd needs >= 2 rows, got {}", m)));
    }
    if tape.value(teacher).rows() != m {
        return Err(Error::Shape("relational_kd: row count mismatch".into()));
    }
    let mm = (m * m) as f64;
    let mut normalized = |tape: &mut Tape, x: NodeId, who: &str| -> Result<NodeId> {
        let sims = cos_matrix(tape, x, x)?;
        let dist = one_minus(tape, sims)?;
        let total = tape.sum(dist)?;
        let mu = tape.scale(total, 1.0 / mm)?;
        if tape.scalar_value(mu)? <= 0.0 {
            return Err(Error::Degenerate(format!(
                "relational_kd: {} distance matrix has zero mean (all embeddings identical)",
                who
            )));
        }
        tape.div_by_scalar(dist, mu)
    };
    let ns = normalized(tape, student, "student")?;
    let nt = normalized(tape, teacher, "teacher")?;
    let diff = tape.sub(ns, nt)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq)?;
    tape.scale(total, 1.0 / mm)
}

/// Squared-difference match of row-softmaxed similarity matrices between
/// student and teacher, summed over both pair sides, averaged by 1/B.
pub fn score_distill_node(
    tape: &mut Tape,
    pair: &PairNodes,
    tau: f64,
    include_diagonal: bool,
) -> Result<NodeId> {
    if tau <= 0.0 {
        return Err(Error::Domain(format!("score distillation tau must be > 0, got {}", tau)));
    }
    let b = tape.value(pair.student_x).rows();
    if b < 2 {
        return Err(Error::Domain(format!("score distillation needs batch >= 2, got {}", b)));
    }
    let mut term = |tape: &mut Tape, s: NodeId, t: NodeId| -> Result<NodeId> {
        let ss = cos_matrix(tape, s, s)?;
        let ss = tape.scale(ss, 1.0 / tau)?;
        let ps = tape.softmax_row(ss)?;
        let tt = cos_matrix(tape, t, t)?;
        let tt = tape.scale(tt, 1.0 / tau)?;
        let pt = tape.softmax_row(tt)?;
        let diff = tape.sub(ps, pt)?;
        let mut sq = tape.mul(diff, diff)?;
        if !include_diagonal {
            let mut mask = Matrix::filled(b, b, 1.0);
            for i in 0..b {
                mask.set(i, i, 0.0);
            }
            let mask = tape.constant(mask)?;
            sq = tape.mul(sq, mask)?;
        }
        let total = tape.sum(sq)?;
        tape.scale(total, 1.0 / b as f64)
    };
    let tx = term(tape, pair.student_x, pair.teacher_x)?;
    let ty = term(tape, pair.student_y, pair.teacher_y)?;
    tape.add(tx, ty)
}
