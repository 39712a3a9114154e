//! The unsupervised training objective: a clustering term that pulls
//! embeddings toward their soft-assigned centroids, an entropy term that
//! keeps cluster proportions balanced, and an orthogonality penalty that
//! stops the score matrices from absorbing embedding rescalings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, SMat};
use crate::linalg::Matrix;
use crate::model::{AssignmentMatrix, ScoreParams, StackTrace};

/// How the per-block weights are distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaMode {
    /// Proportional to the block index, so later blocks weigh more.
    Linear,
    /// All weight on the final block.
    LastOnly,
    /// Equal weight on every block.
    Uniform,
}

/// Per-block weights normalized to sum one.
pub fn alpha_schedule(num_blocks: usize, mode: AlphaMode) -> Result<Vec<f64>> {
    if num_blocks == 0 {
        return Err(Error::Config("alpha schedule needs at least one block".to_string()));
    }
    Ok(match mode {
        AlphaMode::Linear => {
            let sum: f64 = (num_blocks * (num_blocks + 1)) as f64 / 2.0;
            (1..=num_blocks).map(|l| l as f64 / sum).collect()
        }
        AlphaMode::LastOnly => {
            let mut v = vec![0.0; num_blocks];
            v[num_blocks - 1] = 1.0;
            v
        }
        AlphaMode::Uniform => vec![1.0 / num_blocks as f64; num_blocks],
    })
}

/// Weights of the three loss terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// One weight per block, normalized to sum one.
    pub block_weights: Vec<f64>,
    pub entropy_weight: f64,
    pub orthogonality_weight: f64,
    /// Use the uninverted entropy sign, under which minimization rewards
    /// concentrating all mass in a single cluster. Off by default.
    pub literal_entropy: bool,
}

impl LossWeights {
    pub fn new(block_weights: Vec<f64>, entropy_weight: f64, orthogonality_weight: f64) -> Result<Self> {
        if block_weights.is_empty() {
            return Err(Error::Config("need at least one block weight".to_string()));
        }
        if block_weights.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(Error::Config("block weights must be finite and non-negative".to_string()));
        }
        let sum: f64 = block_weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Config("block weights must not all be zero".to_string()));
        }
        if entropy_weight < 0.0 || orthogonality_weight < 0.0 {
            return Err(Error::Config("loss term weights must be non-negative".to_string()));
        }
        Ok(LossWeights {
            block_weights: block_weights.iter().map(|a| a / sum).collect(),
            entropy_weight,
            orthogonality_weight,
            literal_entropy: false,
        })
    }

    /// Convenience constructor from a schedule mode.
    pub fn scheduled(
        num_blocks: usize,
        mode: AlphaMode,
        entropy_weight: f64,
        orthogonality_weight: f64,
    ) -> Result<Self> {
        Self::new(alpha_schedule(num_blocks, mode)?, entropy_weight, orthogonality_weight)
    }

    pub fn num_blocks(&self) -> usize {
        self.block_weights.len()
    }
}

/// A distribution over clusters: `pi_j = (1/N) sum_i delta_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProportions {
    proportions: Vec<f64>,
}

impl ClusterProportions {
    pub fn from_assignment(delta: &AssignmentMatrix) -> Self {
        ClusterProportions { proportions: delta.cluster_proportions() }
    }

    pub fn values(&self) -> &[f64] {
        &self.proportions
    }

    /// `sum_j pi_j ln pi_j` with `0 ln 0 := 0`; ranges over `[-ln K, 0]`.
    pub fn negative_entropy(&self) -> f64 {
        self.proportions
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum()
    }
}

/// Values of the individual loss terms and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub clustering: f64,
    pub entropy: f64,
    pub orthogonality: f64,
    pub total: f64,
}

fn check_trace(trace: &StackTrace, w: &LossWeights) -> Result<()> {
    if trace.num_blocks() != w.num_blocks() {
        return Err(Error::Config(format!(
            "loss weights cover {} blocks but the trace has {}",
            w.num_blocks(),
            trace.num_blocks()
        )));
    }
    Ok(())
}

fn block_scores(trace: &StackTrace, z: &Matrix, sp: &ScoreParams) -> Vec<SMat<f64>> {
    let (wq, wk) = graph::effective_score_matrices(
        &SMat::lift(&sp.query_raw, 0.0),
        &SMat::lift(&sp.key_raw, 0.0),
        sp.parameterization,
    );
    let zs = SMat::lift(z, 0.0);
    (0..trace.num_blocks())
        .map(|l| {
            graph::score_matrix_g(
                &zs,
                &SMat::lift(&trace.states[l].centroids, 0.0),
                &wq,
                &wk,
                sp.activation,
                sp.temperature,
            )
        })
        .collect()
}

/// `-(1/N) sum_l alpha_l sum_ij delta_ij^(l) score(z_i, c_j^(l-1))`, pairing
/// each block's assignment with the centroids it was computed against.
pub fn clustering_loss(
    trace: &StackTrace,
    z: &Matrix,
    sp: &ScoreParams,
    w: &LossWeights,
) -> Result<f64> {
    check_trace(trace, w)?;
    let scores = block_scores(trace, z, sp);
    let deltas: Vec<SMat<f64>> =
        trace.assignments.iter().map(|a| SMat::lift(a.probs(), 0.0)).collect();
    graph::clustering_loss_g(&scores, &deltas, &w.block_weights, z.rows())
}

/// Weighted per-block negative entropy of the cluster proportions.
pub fn entropy_loss(trace: &StackTrace, w: &LossWeights) -> Result<f64> {
    check_trace(trace, w)?;
    let deltas: Vec<SMat<f64>> =
        trace.assignments.iter().map(|a| SMat::lift(a.probs(), 0.0)).collect();
    let n = trace.assignments[0].num_samples();
    graph::entropy_loss_g(&deltas, &w.block_weights, n, w.literal_entropy)
}

/// `||Wq Wq^T - I||_F^2 + ||Wk Wk^T - I||_F^2` on the effective matrices.
pub fn orthogonality_penalty(sp: &ScoreParams) -> f64 {
    let (wq, wk) = graph::effective_score_matrices(
        &SMat::lift(&sp.query_raw, 0.0),
        &SMat::lift(&sp.key_raw, 0.0),
        sp.parameterization,
    );
    graph::orthogonality_penalty_g(&wq, &wk)
}

/// All three terms plus their weighted sum.
pub fn total_loss(
    trace: &StackTrace,
    z: &Matrix,
    sp: &ScoreParams,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let clustering = clustering_loss(trace, z, sp, w)?;
    let entropy = entropy_loss(trace, w)?;
    let orthogonality = orthogonality_penalty(sp);
    let total = clustering + w.entropy_weight * entropy + w.orthogonality_weight * orthogonality;
    if !total.is_finite() {
        return Err(Error::Numerical {
            detail: format!(
                "non-finite loss (clustering {clustering}, entropy {entropy}, orthogonality {orthogonality})"
            ),
            iteration: None,
        });
    }
    Ok(LossBreakdown { clustering, entropy, orthogonality, total })
}
