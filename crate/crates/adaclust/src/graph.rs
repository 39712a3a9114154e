//! Computations written once, generically over [`Scalar`], so the same code
//! runs on plain floats (evaluation) and on the tape (training).
//!
//! The scoring path distributes the weight matrices over the difference,
//! `W(z - c) = Wz - Wc`, so each weight matrix multiplies the embeddings once
//! per forward pass and each block only once per centroid set, instead of once
//! per (sample, centroid) pair.

use crate::autodiff::Scalar;
use crate::error::{Error, Result};
use crate::linalg::{ActivationKind, Matrix};
use crate::model::{CentroidNormalization, ScoreParameterization};

/// Responsibility mass below which a cluster keeps its previous centroid.
pub const EMPTY_CLUSTER_MASS: f64 = 1e-12;

/// Weight parameterization epsilon for the positive-definite mode.
pub const PSD_EPSILON: f64 = 1e-6;

/// Rectangular grid of scalars; the generic counterpart of [`Matrix`].
#[derive(Clone)]
pub struct SMat<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> SMat<S> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        SMat { rows, cols, data }
    }

    /// Lifts a plain matrix into the scalar context of `witness`.
    pub fn lift(m: &Matrix, witness: S) -> Self {
        SMat::from_fn(m.rows(), m.cols(), |i, j| witness.lit(m.get(i, j)))
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> Matrix {
        let data: Vec<f64> = self.data.iter().map(|s| s.value()).collect();
        Matrix::from_vec(self.rows, self.cols, data).unwrap_or_else(|_| {
            // Non-finite values can occur mid-divergence; clamp for reporting.
            let clamped: Vec<f64> = self
                .data
                .iter()
                .map(|s| {
                    let v = s.value();
                    if v.is_finite() {
                        v
                    } else {
                        f64::MAX
                    }
                })
                .collect();
            Matrix::from_vec(self.rows, self.cols, clamped).expect("clamped values are finite")
        })
    }
}

pub fn dot_g<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    debug_assert!(!a.is_empty());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// `a * b^T`, pairing rows of `a` with rows of `b`.
pub fn matmul_transposed_g<S: Scalar>(a: &SMat<S>, b: &SMat<S>) -> SMat<S> {
    debug_assert_eq!(a.cols, b.cols);
    SMat::from_fn(a.rows, b.rows, |i, j| dot_g(a.row(i), b.row(j)))
}

/// `(raw + raw^T) / 2`, elementwise; exactly symmetric.
pub fn symmetrize_g<S: Scalar>(raw: &SMat<S>) -> SMat<S> {
    debug_assert_eq!(raw.rows, raw.cols);
    SMat::from_fn(raw.rows, raw.cols, |i, j| (raw.at(i, j) + raw.at(j, i)).scale(0.5))
}

/// Effective score matrices under the chosen parameterization.
pub fn effective_score_matrices<S: Scalar>(
    query_raw: &SMat<S>,
    key_raw: &SMat<S>,
    mode: ScoreParameterization,
) -> (SMat<S>, SMat<S>) {
    match mode {
        ScoreParameterization::Symmetrized => (symmetrize_g(query_raw), symmetrize_g(key_raw)),
        ScoreParameterization::Raw => (query_raw.clone(), key_raw.clone()),
        ScoreParameterization::PsdTied => {
            let mut gram = matmul_transposed_g(query_raw, query_raw);
            for i in 0..gram.rows {
                let idx = i * gram.cols + i;
                gram.data[idx] = gram.data[idx].add_const(PSD_EPSILON);
            }
            (gram.clone(), gram)
        }
    }
}

/// MLP forward pass: hidden layers are activated, the final layer is linear.
/// `layers` holds `(weight, bias)` with weights shaped `in_dim x out_dim`.
pub fn encode_g<S: Scalar>(
    layers: &[(SMat<S>, Vec<S>)],
    activation: ActivationKind,
    x: &SMat<S>,
) -> SMat<S> {
    let mut current = x.clone();
    let last = layers.len() - 1;
    for (li, (weight, bias)) in layers.iter().enumerate() {
        debug_assert_eq!(current.cols, weight.rows);
        let mut next = SMat::from_fn(current.rows, weight.cols, |i, o| {
            let mut acc = current.at(i, 0) * weight.at(0, o);
            for k in 1..current.cols {
                acc = acc + current.at(i, k) * weight.at(k, o);
            }
            acc + bias[o]
        });
        if li != last {
            next = SMat {
                rows: next.rows,
                cols: next.cols,
                data: next.data.into_iter().map(|v| v.activate(activation)).collect(),
            };
        }
        current = next;
    }
    current
}

/// Plain softmax over each row with max subtraction (any temperature is
/// expected to already live inside the scores).
pub fn softmax_rows_g<S: Scalar>(scores: &SMat<S>) -> SMat<S> {
    let mut data = Vec::with_capacity(scores.rows * scores.cols);
    for i in 0..scores.rows {
        let row = scores.row(i);
        let mut pivot = 0;
        for (j, s) in row.iter().enumerate() {
            if s.value() > row[pivot].value() {
                pivot = j;
            }
        }
        let max = row[pivot];
        let exps: Vec<S> = row.iter().map(|&s| (s - max).exp()).collect();
        let mut sum = exps[0];
        for &e in &exps[1..] {
            sum = sum + e;
        }
        data.extend(exps.into_iter().map(|e| e / sum));
    }
    SMat { rows: scores.rows, cols: scores.cols, data }
}

/// Pairwise score of one embedding against one centroid:
/// `-sigma(Wq(z-c) . Wk(z-c)) / tau`.
pub fn score_pair_g<S: Scalar>(
    z: &[S],
    c: &[S],
    wq_eff: &SMat<S>,
    wk_eff: &SMat<S>,
    activation: ActivationKind,
    tau: f64,
) -> S {
    let diff: Vec<S> = z.iter().zip(c).map(|(&a, &b)| a - b).collect();
    let q: Vec<S> = (0..wq_eff.rows).map(|r| dot_g(wq_eff.row(r), &diff)).collect();
    let k: Vec<S> = (0..wk_eff.rows).map(|r| dot_g(wk_eff.row(r), &diff)).collect();
    dot_g(&q, &k).activate(activation).scale(-1.0 / tau)
}

/// Conventional attention score `sigma(Wq z . Wk c) / tau` with no difference
/// structure; higher means more similar. Kept for the contrast tests showing
/// it does not peak at `z == c`.
pub fn bilinear_score_g<S: Scalar>(
    z: &[S],
    c: &[S],
    wq: &SMat<S>,
    wk: &SMat<S>,
    activation: ActivationKind,
    tau: f64,
) -> S {
    let q: Vec<S> = (0..wq.rows).map(|r| dot_g(wq.row(r), z)).collect();
    let k: Vec<S> = (0..wk.rows).map(|r| dot_g(wk.row(r), c)).collect();
    dot_g(&q, &k).activate(activation).scale(1.0 / tau)
}

/// Score matrix of all embeddings against all centroids via the distributed
/// form, given the precomputed products `zq = Z Wq^T` and `zk = Z Wk^T`.
fn score_block<S: Scalar>(
    zq: &SMat<S>,
    zk: &SMat<S>,
    cq: &SMat<S>,
    ck: &SMat<S>,
    activation: ActivationKind,
    tau: f64,
) -> SMat<S> {
    let dim = zq.cols;
    SMat::from_fn(zq.rows, cq.rows, |i, j| {
        let zq_row = zq.row(i);
        let zk_row = zk.row(i);
        let cq_row = cq.row(j);
        let ck_row = ck.row(j);
        let mut acc = (zq_row[0] - cq_row[0]) * (zk_row[0] - ck_row[0]);
        for d in 1..dim {
            acc = acc + (zq_row[d] - cq_row[d]) * (zk_row[d] - ck_row[d]);
        }
        acc.activate(activation).scale(-1.0 / tau)
    })
}

/// Score matrix of all embeddings against one fixed centroid set.
pub fn score_matrix_g<S: Scalar>(
    z: &SMat<S>,
    centroids: &SMat<S>,
    wq_eff: &SMat<S>,
    wk_eff: &SMat<S>,
    activation: ActivationKind,
    tau: f64,
) -> SMat<S> {
    let zq = matmul_transposed_g(z, wq_eff);
    let zk = matmul_transposed_g(z, wk_eff);
    let cq = matmul_transposed_g(centroids, wq_eff);
    let ck = matmul_transposed_g(centroids, wk_eff);
    score_block(&zq, &zk, &cq, &ck, activation, tau)
}

/// Responsibility-weighted centroid update.
pub fn update_centroids_g<S: Scalar>(
    z: &SMat<S>,
    delta: &SMat<S>,
    prev: &SMat<S>,
    normalization: CentroidNormalization,
) -> SMat<S> {
    let k = delta.cols;
    let dim = z.cols;
    let n = z.rows;
    let masses: Vec<S> = (0..k)
        .map(|j| {
            let mut m = delta.at(0, j);
            for i in 1..n {
                m = m + delta.at(i, j);
            }
            m
        })
        .collect();
    let weighted_sum = |j: usize, d: usize| {
        let mut acc = delta.at(0, j) * z.at(0, d);
        for i in 1..n {
            acc = acc + delta.at(i, j) * z.at(i, d);
        }
        acc
    };
    match normalization {
        CentroidNormalization::PerCluster => SMat::from_fn(k, dim, |j, d| {
            if masses[j].value() < EMPTY_CLUSTER_MASS {
                prev.at(j, d)
            } else {
                weighted_sum(j, d) / masses[j]
            }
        }),
        CentroidNormalization::Global => {
            let mut total = masses[0];
            for &m in &masses[1..] {
                total = total + m;
            }
            SMat::from_fn(k, dim, |j, d| weighted_sum(j, d) / total)
        }
    }
}

/// Everything produced block by block during a forward pass of the stack.
pub struct GTrace<S> {
    /// Centroids before each block and after the last: `num_blocks + 1` grids.
    pub centroids: Vec<SMat<S>>,
    /// Score matrix each block's assignment was computed from.
    pub scores: Vec<SMat<S>>,
    /// Row-stochastic assignments, one per block.
    pub deltas: Vec<SMat<S>>,
}

/// Runs the full stack: alternating assignment and centroid update,
/// `num_blocks` times, recording every intermediate state.
#[allow(clippy::too_many_arguments)]
pub fn stack_forward<S: Scalar>(
    z: &SMat<S>,
    wq_eff: &SMat<S>,
    wk_eff: &SMat<S>,
    init_centroids: &SMat<S>,
    num_blocks: usize,
    activation: ActivationKind,
    tau: f64,
    normalization: CentroidNormalization,
) -> GTrace<S> {
    let zq = matmul_transposed_g(z, wq_eff);
    let zk = matmul_transposed_g(z, wk_eff);
    let mut centroids = vec![init_centroids.clone()];
    let mut scores = Vec::with_capacity(num_blocks);
    let mut deltas = Vec::with_capacity(num_blocks);
    for _ in 0..num_blocks {
        let current = centroids.last().expect("at least the initial centroids");
        let cq = matmul_transposed_g(current, wq_eff);
        let ck = matmul_transposed_g(current, wk_eff);
        let block_scores = score_block(&zq, &zk, &cq, &ck, activation, tau);
        let delta = softmax_rows_g(&block_scores);
        let next = update_centroids_g(z, &delta, current, normalization);
        scores.push(block_scores);
        deltas.push(delta);
        centroids.push(next);
    }
    GTrace { centroids, scores, deltas }
}

/// Loss terms of one forward pass, still in scalar form.
pub struct LossPartsG<S> {
    pub clustering: S,
    pub entropy: S,
    pub orthogonality: S,
    pub total: S,
}

/// `-(1/N) sum_l alpha_l sum_ij delta_ij^(l) score_ij^(l)`.
pub fn clustering_loss_g<S: Scalar>(
    scores: &[SMat<S>],
    deltas: &[SMat<S>],
    block_weights: &[f64],
    n: usize,
) -> Result<S> {
    if scores.len() != block_weights.len() || deltas.len() != block_weights.len() {
        return Err(Error::Config(format!(
            "block weights cover {} blocks but the trace has {}",
            block_weights.len(),
            scores.len()
        )));
    }
    let witness = scores[0].data[0];
    let mut total = witness.lit(0.0);
    for ((score, delta), &alpha) in scores.iter().zip(deltas).zip(block_weights) {
        let mut block = delta.data[0] * score.data[0];
        for idx in 1..score.data.len() {
            block = block + delta.data[idx] * score.data[idx];
        }
        total = total + block.scale(alpha);
    }
    Ok(total.scale(-1.0 / n as f64))
}

/// Per-block negative entropy of the cluster proportions,
/// `sum_l alpha_l sum_j pi_j ln pi_j` with `pi_j = (1/N) sum_i delta_ij`.
/// Minimizing it favors balanced clusters. `literal_sign` flips the sign to
/// the uninverted convention, under which minimization rewards collapse.
pub fn entropy_loss_g<S: Scalar>(
    deltas: &[SMat<S>],
    block_weights: &[f64],
    n: usize,
    literal_sign: bool,
) -> Result<S> {
    if deltas.len() != block_weights.len() {
        return Err(Error::Config(format!(
            "block weights cover {} blocks but the trace has {}",
            block_weights.len(),
            deltas.len()
        )));
    }
    let witness = deltas[0].data[0];
    let mut total = witness.lit(0.0);
    for (delta, &alpha) in deltas.iter().zip(block_weights) {
        let mut block = witness.lit(0.0);
        for j in 0..delta.cols {
            let mut mass = delta.at(0, j);
            for i in 1..delta.rows {
                mass = mass + delta.at(i, j);
            }
            let proportion = mass.scale(1.0 / n as f64);
            // 0 ln 0 := 0
            if proportion.value() > 0.0 {
                block = block + proportion * proportion.ln();
            }
        }
        total = total + block.scale(alpha);
    }
    Ok(if literal_sign { -total } else { total })
}

/// `||Wq Wq^T - I||_F^2 + ||Wk Wk^T - I||_F^2` on the effective matrices.
pub fn orthogonality_penalty_g<S: Scalar>(wq_eff: &SMat<S>, wk_eff: &SMat<S>) -> S {
    let witness = wq_eff.data[0];
    let mut total = witness.lit(0.0);
    for w in [wq_eff, wk_eff] {
        let gram = matmul_transposed_g(w, w);
        for i in 0..gram.rows {
            for j in 0..gram.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                let d = gram.at(i, j).add_const(-target);
                total = total + d * d;
            }
        }
    }
    total
}

/// Combines the three loss terms: `clustering + beta entropy + lambda orth`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_g<S: Scalar>(
    trace: &GTrace<S>,
    wq_eff: &SMat<S>,
    wk_eff: &SMat<S>,
    block_weights: &[f64],
    entropy_weight: f64,
    orthogonality_weight: f64,
    literal_entropy: bool,
    n: usize,
) -> Result<LossPartsG<S>> {
    let clustering = clustering_loss_g(&trace.scores, &trace.deltas, block_weights, n)?;
    let entropy = entropy_loss_g(&trace.deltas, block_weights, n, literal_entropy)?;
    let orthogonality = orthogonality_penalty_g(wq_eff, wk_eff);
    let total = clustering + entropy.scale(entropy_weight) + orthogonality.scale(orthogonality_weight);
    Ok(LossPartsG { clustering, entropy, orthogonality, total })
}
