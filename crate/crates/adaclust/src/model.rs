//! The encoder and the stack of centroid update blocks.
//!
//! Each block softly assigns every embedding to every centroid through a
//! learned score, then recomputes the centroids as responsibility-weighted
//! means. Because the centroids are re-derived from whatever batch is being
//! scored, a trained model adapts its centroids to a new data distribution in
//! a single forward pass.
//!
//! The score of embedding `z` against centroid `c` is
//! `-sigma(Wq(z - c) . Wk(z - c)) / tau`, with `Wq`, `Wk` symmetric by
//! construction. With the identity activation and `Wq = Wk = I` it reduces to
//! the negative squared Euclidean distance (one block is then exactly a soft
//! k-means step); with a positive-definite product `Wq^T Wk` it reduces to a
//! Mahalanobis form (a shared-covariance mixture E-step).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, SMat};
use crate::linalg::{self, ActivationKind, Matrix};

/// How the effective score matrices are derived from the raw parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreParameterization {
    /// `W = (raw + raw^T) / 2`; the default.
    Symmetrized,
    /// Raw matrices used as-is (the ablation that drops the symmetry
    /// constraint).
    Raw,
    /// `Wq = Wk = raw raw^T + eps I`, guaranteeing a positive-definite
    /// product for non-ReLU activations.
    PsdTied,
}

/// Denominator used by the centroid update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CentroidNormalization {
    /// Each centroid is divided by its own responsibility mass; the update is
    /// then a weighted mean and stays in the convex hull of the batch.
    PerCluster,
    /// All centroids are divided by the total mass (= N). Kept for
    /// comparison; shrinks centroids toward the origin.
    Global,
}

/// Where the initial centroids come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CentroidInit {
    /// First K rows of the identity; deterministic, no seed involved.
    IdentityRows,
    /// Seeded random orthonormal rows.
    RandomOrthonormal,
}

/// MLP encoder parameters. Weights are `in_dim x out_dim`; hidden layers are
/// activated, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: Vec<EncoderLayer>,
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn new(layers: Vec<EncoderLayer>, activation: ActivationKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".to_string()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weight.cols() != layer.bias.len() {
                return Err(Error::Shape {
                    context: "EncoderParams::new",
                    detail: format!(
                        "layer {i}: weight is {}x{} but bias has length {}",
                        layer.weight.rows(),
                        layer.weight.cols(),
                        layer.bias.len()
                    ),
                });
            }
            if i > 0 && layers[i - 1].weight.cols() != layer.weight.rows() {
                return Err(Error::Shape {
                    context: "EncoderParams::new",
                    detail: format!(
                        "layer {} outputs {} features but layer {i} expects {}",
                        i - 1,
                        layers[i - 1].weight.cols(),
                        layer.weight.rows()
                    ),
                });
            }
        }
        Ok(EncoderParams { layers, activation })
    }

    /// Seeded He-style initialization for the given layer widths
    /// `[input, hidden..., output]`.
    pub fn mlp(dims: &[usize], activation: ActivationKind, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        if dims.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output widths".to_string()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g * std
                })
                .collect();
            layers.push(EncoderLayer {
                weight: Matrix::from_vec(fan_in, fan_out, data)?,
                bias: vec![0.0; fan_out],
            });
        }
        Self::new(layers, activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("validated non-empty").weight.cols()
    }

    pub(crate) fn lift<S: crate::autodiff::Scalar>(&self, witness: S) -> Vec<(SMat<S>, Vec<S>)> {
        self.layers
            .iter()
            .map(|layer| {
                let w = SMat::lift(&layer.weight, witness);
                let b = layer.bias.iter().map(|&v| witness.lit(v)).collect();
                (w, b)
            })
            .collect()
    }
}

/// Runs the encoder on a batch of feature rows.
pub fn encode(params: &EncoderParams, x: &Matrix) -> Result<Matrix> {
    if x.cols() != params.input_dim() {
        return Err(Error::Shape {
            context: "encode",
            detail: format!(
                "input has {} features but the encoder expects {}",
                x.cols(),
                params.input_dim()
            ),
        });
    }
    let layers = params.lift(0.0);
    Ok(graph::encode_g(&layers, params.activation, &SMat::lift(x, 0.0)).values())
}

/// Raw parameters of the learned score function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub query_raw: Matrix,
    pub key_raw: Matrix,
    pub activation: ActivationKind,
    pub temperature: f64,
    pub parameterization: ScoreParameterization,
}

impl ScoreParams {
    pub fn new(
        query_raw: Matrix,
        key_raw: Matrix,
        activation: ActivationKind,
        temperature: f64,
        parameterization: ScoreParameterization,
    ) -> Result<Self> {
        if query_raw.rows() != query_raw.cols() || key_raw.rows() != key_raw.cols() {
            return Err(Error::Shape {
                context: "ScoreParams::new",
                detail: "score matrices must be square".to_string(),
            });
        }
        if query_raw.rows() != key_raw.rows() {
            return Err(Error::Shape {
                context: "ScoreParams::new",
                detail: format!(
                    "query is {}x{} but key is {}x{}",
                    query_raw.rows(),
                    query_raw.cols(),
                    key_raw.rows(),
                    key_raw.cols()
                ),
            });
        }
        if !(temperature > 0.0) {
            return Err(Error::InvalidParameter {
                name: "temperature",
                detail: format!("must be positive, got {temperature}"),
            });
        }
        Ok(ScoreParams { query_raw, key_raw, activation, temperature, parameterization })
    }

    /// Identity raw matrices: the score starts as a squared Euclidean
    /// distance.
    pub fn identity(dim: usize, activation: ActivationKind, temperature: f64) -> Result<Self> {
        Self::new(
            Matrix::identity(dim),
            Matrix::identity(dim),
            activation,
            temperature,
            ScoreParameterization::Symmetrized,
        )
    }

    pub fn dim(&self) -> usize {
        self.query_raw.rows()
    }

    /// Effective matrices under the configured parameterization.
    pub fn effective_matrices(&self) -> (Matrix, Matrix) {
        let (q, k) = graph::effective_score_matrices(
            &SMat::lift(&self.query_raw, 0.0),
            &SMat::lift(&self.key_raw, 0.0),
            self.parameterization,
        );
        (q.values(), k.values())
    }
}

/// Score of one embedding against one centroid.
pub fn score(z: &[f64], c: &[f64], sp: &ScoreParams) -> Result<f64> {
    if z.len() != sp.dim() || c.len() != sp.dim() {
        return Err(Error::Shape {
            context: "score",
            detail: format!(
                "embedding ({}) and centroid ({}) must both have dimension {}",
                z.len(),
                c.len(),
                sp.dim()
            ),
        });
    }
    let (wq, wk) = graph::effective_score_matrices(
        &SMat::lift(&sp.query_raw, 0.0),
        &SMat::lift(&sp.key_raw, 0.0),
        sp.parameterization,
    );
    Ok(graph::score_pair_g(z, c, &wq, &wk, sp.activation, sp.temperature))
}

/// Conventional bilinear attention score `sigma(Wq z . Wk c) / tau` computed
/// on the raw matrices. Unlike [`score`], nothing constrains it to peak at
/// `z == c`.
pub fn unconstrained_bilinear_score(
    z: &[f64],
    c: &[f64],
    wq: &Matrix,
    wk: &Matrix,
    activation: ActivationKind,
    tau: f64,
) -> Result<f64> {
    if wq.cols() != z.len() || wk.cols() != c.len() {
        return Err(Error::Shape {
            context: "unconstrained_bilinear_score",
            detail: "matrix and vector dimensions do not match".to_string(),
        });
    }
    Ok(graph::bilinear_score_g(
        z,
        c,
        &SMat::lift(wq, 0.0),
        &SMat::lift(wk, 0.0),
        activation,
        tau,
    ))
}

/// Centroids at one point in the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidState {
    pub centroids: Matrix,
    pub block_index: usize,
}

/// Row-stochastic soft assignment of samples to clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    probs: Matrix,
}

impl AssignmentMatrix {
    /// Wraps a matrix after checking every row lies on the probability
    /// simplex (within 1e-9).
    pub fn new(probs: Matrix) -> Result<Self> {
        for (i, row) in probs.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(-1e-12..=1.0 + 1e-9).contains(&p)) {
                return Err(Error::InvalidParameter {
                    name: "probs",
                    detail: format!("row {i} is not on the probability simplex (sum {sum})"),
                });
            }
        }
        Ok(AssignmentMatrix { probs })
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn num_samples(&self) -> usize {
        self.probs.rows()
    }

    pub fn num_clusters(&self) -> usize {
        self.probs.cols()
    }

    /// Hard labels: per-row argmax, ties resolved to the lowest index.
    pub fn labels(&self) -> Vec<usize> {
        self.probs
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Per-cluster share of the batch, `pi_j = (1/N) sum_i delta_ij`.
    pub fn cluster_proportions(&self) -> Vec<f64> {
        let n = self.probs.rows() as f64;
        let mut pi = vec![0.0; self.probs.cols()];
        for row in self.probs.row_iter() {
            for (p, &v) in pi.iter_mut().zip(row) {
                *p += v;
            }
        }
        pi.iter_mut().for_each(|p| *p /= n);
        pi
    }

    /// Hard-label counts per cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.probs.cols()];
        for label in self.labels() {
            sizes[label] += 1;
        }
        sizes
    }
}

/// Static shape of the block stack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockStackConfig {
    pub num_blocks: usize,
    pub embedding_dim: usize,
    pub num_clusters: usize,
    pub init: CentroidInit,
    pub normalization: CentroidNormalization,
}

impl BlockStackConfig {
    pub fn new(num_blocks: usize, embedding_dim: usize, num_clusters: usize) -> Result<Self> {
        if num_blocks == 0 {
            return Err(Error::Config("the stack needs at least one block".to_string()));
        }
        if num_clusters < 2 {
            return Err(Error::Config(format!(
                "clustering needs at least 2 clusters, got {num_clusters}"
            )));
        }
        if num_clusters > embedding_dim {
            return Err(Error::Config(format!(
                "orthogonal initialization requires K <= b, got K = {num_clusters}, b = {embedding_dim}"
            )));
        }
        Ok(BlockStackConfig {
            num_blocks,
            embedding_dim,
            num_clusters,
            init: CentroidInit::IdentityRows,
            normalization: CentroidNormalization::PerCluster,
        })
    }

    pub fn with_init(mut self, init: CentroidInit) -> Self {
        self.init = init;
        self
    }

    pub fn with_normalization(mut self, normalization: CentroidNormalization) -> Self {
        self.normalization = normalization;
        self
    }
}

/// Initial centroids: orthonormal rows in embedding space.
pub fn init_centroids(cfg: &BlockStackConfig, seed: u64) -> Result<CentroidState> {
    let centroids = match cfg.init {
        CentroidInit::IdentityRows => {
            let mut m = Matrix::zeros(cfg.num_clusters, cfg.embedding_dim);
            for j in 0..cfg.num_clusters {
                m.set(j, j, 1.0);
            }
            m
        }
        CentroidInit::RandomOrthonormal => {
            linalg::random_orthonormal_rows(cfg.num_clusters, cfg.embedding_dim, seed).map_err(
                |e| Error::Config(format!("centroid initialization failed: {e}")),
            )?
        }
    };
    Ok(CentroidState { centroids, block_index: 0 })
}

/// Soft assignment of a batch against the current centroids.
pub fn assign(z: &Matrix, state: &CentroidState, sp: &ScoreParams) -> Result<AssignmentMatrix> {
    if z.cols() != sp.dim() || state.centroids.cols() != sp.dim() {
        return Err(Error::Shape {
            context: "assign",
            detail: format!(
                "embeddings ({}), centroids ({}) and score matrices ({}) disagree on dimension",
                z.cols(),
                state.centroids.cols(),
                sp.dim()
            ),
        });
    }
    let (wq, wk) = graph::effective_score_matrices(
        &SMat::lift(&sp.query_raw, 0.0),
        &SMat::lift(&sp.key_raw, 0.0),
        sp.parameterization,
    );
    let trace = graph::stack_forward(
        &SMat::lift(z, 0.0),
        &wq,
        &wk,
        &SMat::lift(&state.centroids, 0.0),
        1,
        sp.activation,
        sp.temperature,
        CentroidNormalization::PerCluster,
    );
    AssignmentMatrix::new(trace.deltas[0].values())
}

/// Responsibility-weighted centroid update; clusters whose mass falls below
/// 1e-12 keep their previous centroid.
pub fn update_centroids(
    z: &Matrix,
    delta: &AssignmentMatrix,
    prev: &CentroidState,
) -> Result<CentroidState> {
    update_centroids_with(z, delta, prev, CentroidNormalization::PerCluster)
}

pub fn update_centroids_with(
    z: &Matrix,
    delta: &AssignmentMatrix,
    prev: &CentroidState,
    normalization: CentroidNormalization,
) -> Result<CentroidState> {
    if delta.num_samples() != z.rows() || delta.num_clusters() != prev.centroids.rows() {
        return Err(Error::Shape {
            context: "update_centroids",
            detail: format!(
                "assignments are {}x{} but the batch has {} rows and there are {} centroids",
                delta.num_samples(),
                delta.num_clusters(),
                z.rows(),
                prev.centroids.rows()
            ),
        });
    }
    let updated = graph::update_centroids_g(
        &SMat::lift(z, 0.0),
        &SMat::lift(delta.probs(), 0.0),
        &SMat::lift(&prev.centroids, 0.0),
        normalization,
    );
    Ok(CentroidState { centroids: updated.values(), block_index: prev.block_index + 1 })
}

/// Centroids and assignments recorded at every block of a forward pass.
#[derive(Debug, Clone)]
pub struct StackTrace {
    /// `num_blocks + 1` states: initial centroids plus one per block.
    pub states: Vec<CentroidState>,
    /// One assignment per block; `assignments[l]` was computed against
    /// `states[l]`.
    pub assignments: Vec<AssignmentMatrix>,
}

impl StackTrace {
    pub fn num_blocks(&self) -> usize {
        self.assignments.len()
    }

    pub fn final_assignment(&self) -> &AssignmentMatrix {
        self.assignments.last().expect("a stack has at least one block")
    }

    /// Hard labels from the final block's assignment.
    pub fn labels(&self) -> Vec<usize> {
        self.final_assignment().labels()
    }

    /// Serializable per-block summary (centroid coordinates plus hard
    /// cluster sizes).
    pub fn summary(&self) -> TraceSummary {
        let blocks = self
            .states
            .iter()
            .enumerate()
            .map(|(l, state)| {
                let centroids =
                    state.centroids.row_iter().map(|row| row.to_vec()).collect::<Vec<_>>();
                let cluster_sizes = if l == 0 {
                    None
                } else {
                    Some(self.assignments[l - 1].cluster_sizes())
                };
                TraceBlock { block_index: state.block_index, centroids, assignments_summary: cluster_sizes.map(|cluster_sizes| AssignmentSummary { cluster_sizes }) }
            })
            .collect();
        TraceSummary { blocks }
    }
}

/// JSON document emitted for centroid-trajectory inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub blocks: Vec<TraceBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceBlock {
    pub block_index: usize,
    pub centroids: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignments_summary: Option<AssignmentSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub cluster_sizes: Vec<usize>,
}

/// Runs the full stack on a batch of embeddings.
pub fn run_stack(
    z: &Matrix,
    cfg: &BlockStackConfig,
    sp: &ScoreParams,
    seed: u64,
) -> Result<StackTrace> {
    if z.cols() != cfg.embedding_dim {
        return Err(Error::Shape {
            context: "run_stack",
            detail: format!(
                "embeddings have dimension {} but the stack is configured for {}",
                z.cols(),
                cfg.embedding_dim
            ),
        });
    }
    if sp.dim() != cfg.embedding_dim {
        return Err(Error::Shape {
            context: "run_stack",
            detail: format!(
                "score matrices are {}x{} but the stack is configured for dimension {}",
                sp.dim(),
                sp.dim(),
                cfg.embedding_dim
            ),
        });
    }
    let init = init_centroids(cfg, seed)?;
    let (wq, wk) = graph::effective_score_matrices(
        &SMat::lift(&sp.query_raw, 0.0),
        &SMat::lift(&sp.key_raw, 0.0),
        sp.parameterization,
    );
    let trace = graph::stack_forward(
        &SMat::lift(z, 0.0),
        &wq,
        &wk,
        &SMat::lift(&init.centroids, 0.0),
        cfg.num_blocks,
        sp.activation,
        sp.temperature,
        cfg.normalization,
    );
    let states = trace
        .centroids
        .iter()
        .enumerate()
        .map(|(l, c)| CentroidState { centroids: c.values(), block_index: l })
        .collect();
    let assignments = trace
        .deltas
        .iter()
        .map(|d| AssignmentMatrix::new(d.values()))
        .collect::<Result<Vec<_>>>()?;
    Ok(StackTrace { states, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclidean_params(dim: usize, tau: f64) -> ScoreParams {
        ScoreParams::identity(dim, ActivationKind::Identity, tau).unwrap()
    }

    #[test]
    fn encode_zero_weights_gives_zeros() {
        let params = EncoderParams::new(
            vec![EncoderLayer { weight: Matrix::zeros(3, 2), bias: vec![0.0, 0.0] }],
            ActivationKind::ReLU,
        )
        .unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let z = encode(&params, &x).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
    }

    #[test]
    fn encode_identity_layer_is_identity() {
        let params = EncoderParams::new(
            vec![EncoderLayer { weight: Matrix::identity(3), bias: vec![0.0; 3] }],
            ActivationKind::Identity,
        )
        .unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let z = encode(&params, &x).unwrap();
        assert_eq!(z.data(), x.data());
    }

    #[test]
    fn encode_matches_straight_line_reimplementation() {
        // Independent oracle: an explicit loop-nest evaluation of the MLP.
        let params = EncoderParams::mlp(&[3, 4, 2], ActivationKind::ReLU, 99).unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.3, -1.2, 0.7, 1.5, 0.1, -0.4]).unwrap();
        let z = encode(&params, &x).unwrap();

        for (i, row) in x.row_iter().enumerate() {
            let mut h: Vec<f64> = row.to_vec();
            for (li, layer) in params.layers.iter().enumerate() {
                let mut next = vec![0.0; layer.weight.cols()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &hv) in h.iter().enumerate() {
                        acc += hv * layer.weight.get(k, o);
                    }
                    acc += layer.bias[o];
                    *slot = if li + 1 < params.layers.len() {
                        ActivationKind::ReLU.apply(acc)
                    } else {
                        acc
                    };
                }
                h = next;
            }
            for (j, &v) in h.iter().enumerate() {
                assert!((z.get(i, j) - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let params = EncoderParams::mlp(&[3, 2], ActivationKind::ReLU, 0).unwrap();
        let x = Matrix::zeros(2, 4);
        assert!(matches!(encode(&params, &x), Err(Error::Shape { .. })));
    }

    #[test]
    fn score_is_zero_at_centroid() {
        for activation in [
            ActivationKind::Identity,
            ActivationKind::ReLU,
            ActivationKind::LeakyReLU { slope: 0.1 },
        ] {
            let sp = ScoreParams::new(
                Matrix::from_vec(2, 2, vec![0.7, -0.3, 1.2, 0.4]).unwrap(),
                Matrix::from_vec(2, 2, vec![1.1, 0.2, -0.5, 0.9]).unwrap(),
                activation,
                0.7,
                ScoreParameterization::Symmetrized,
            )
            .unwrap();
            let z = [1.5, -2.0];
            assert_eq!(score(&z, &z, &sp).unwrap(), 0.0);
        }
    }

    #[test]
    fn score_euclidean_special_case() {
        let sp = euclidean_params(2, 1.0);
        let s = score(&[3.0, 4.0], &[0.0, 0.0], &sp).unwrap();
        assert!((s + 25.0).abs() <= 1e-12);
    }

    #[test]
    fn bilinear_counterexample_breaks_the_bound() {
        // Unconstrained attention matrices for which the score at z != c
        // exceeds the score at z == c. The recomputed value is +2 (the sign
        // in the source derivation does not matter: either way the bound
        // fails).
        let wq = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let wk = Matrix::from_vec(2, 2, vec![0.0, -1.0, 0.0, -1.0]).unwrap();
        let c = [0.0, -1.0];
        let z = [1.0, 0.0];
        let at_centroid =
            unconstrained_bilinear_score(&c, &c, &wq, &wk, ActivationKind::Identity, 1.0).unwrap();
        let away =
            unconstrained_bilinear_score(&z, &c, &wq, &wk, ActivationKind::Identity, 1.0).unwrap();
        assert_eq!(at_centroid, 0.0);
        assert_eq!(away, 2.0);
        assert!(away > at_centroid, "the bilinear score must violate the bound here");
    }

    #[test]
    fn assign_equidistant_is_uniform() {
        let sp = euclidean_params(2, 1.0);
        let state = CentroidState { centroids: Matrix::identity(2), block_index: 0 };
        // (0.5, 0.5) is equidistant from e1 and e2.
        let z = Matrix::from_vec(1, 2, vec![0.5, 0.5]).unwrap();
        let delta = assign(&z, &state, &sp).unwrap();
        assert!((delta.probs().get(0, 0) - 0.5).abs() <= 1e-12);
        assert!((delta.probs().get(0, 1) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn assign_sharp_temperature_is_nearest_centroid() {
        let sp = euclidean_params(2, 0.01);
        let state = CentroidState {
            centroids: Matrix::from_vec(2, 2, vec![0.0, 0.0, 10.0, 0.0]).unwrap(),
            block_index: 0,
        };
        let z = Matrix::from_vec(2, 2, vec![0.5, 0.1, 9.5, -0.2]).unwrap();
        let delta = assign(&z, &state, &sp).unwrap();
        assert!(delta.probs().get(0, 0) > 1.0 - 1e-9);
        assert!(delta.probs().get(1, 1) > 1.0 - 1e-9);
        assert_eq!(delta.labels(), vec![0, 1]);
    }

    #[test]
    fn assign_closed_form_two_point() {
        let sp = euclidean_params(2, 1.0);
        let state = CentroidState {
            centroids: Matrix::from_vec(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap(),
            block_index: 0,
        };
        // Sample at the first centroid: scores are 0 and -25.
        let z = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let delta = assign(&z, &state, &sp).unwrap();
        let expected = 1.0 / (1.0 + (-25.0f64).exp());
        assert!((delta.probs().get(0, 0) - expected).abs() <= 1e-12);
        assert!((delta.probs().get(0, 1) - (1.0 - expected)).abs() <= 1e-12);
    }

    #[test]
    fn update_one_hot_gives_cluster_means() {
        let z = Matrix::from_vec(4, 1, vec![0.0, 1.0, 10.0, 12.0]).unwrap();
        let probs = Matrix::from_vec(
            4,
            2,
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let delta = AssignmentMatrix::new(probs).unwrap();
        let prev = CentroidState { centroids: Matrix::zeros(2, 1), block_index: 0 };
        let next = update_centroids(&z, &delta, &prev).unwrap();
        assert_eq!(next.centroids.data(), &[0.5, 11.0]);
        assert_eq!(next.block_index, 1);
    }

    #[test]
    fn update_uniform_gives_global_mean() {
        let z = Matrix::from_vec(3, 2, vec![0.0, 0.0, 3.0, 3.0, 6.0, 0.0]).unwrap();
        let probs = Matrix::from_vec(3, 2, vec![0.5; 6]).unwrap();
        let delta = AssignmentMatrix::new(probs).unwrap();
        let prev = CentroidState { centroids: Matrix::zeros(2, 2), block_index: 0 };
        let next = update_centroids(&z, &delta, &prev).unwrap();
        for j in 0..2 {
            assert!((next.centroids.get(j, 0) - 3.0).abs() <= 1e-12);
            assert!((next.centroids.get(j, 1) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn update_weighted_example() {
        let z = Matrix::from_vec(3, 2, vec![0.0, 0.0, 1.0, 0.0, 10.0, 0.0]).unwrap();
        let probs =
            Matrix::from_vec(3, 2, vec![0.9, 0.1, 0.8, 0.2, 0.1, 0.9]).unwrap();
        let delta = AssignmentMatrix::new(probs).unwrap();
        let prev = CentroidState { centroids: Matrix::zeros(2, 2), block_index: 0 };
        let next = update_centroids(&z, &delta, &prev).unwrap();
        assert!((next.centroids.get(0, 0) - 1.0).abs() <= 1e-12);
        assert!((next.centroids.get(1, 0) - 9.2 / 1.2).abs() <= 1e-12);
        assert_eq!(next.centroids.get(0, 1), 0.0);
    }

    #[test]
    fn update_global_normalization_divides_by_total_mass() {
        // The comparison mode: every centroid is divided by the total mass
        // N, so a uniform assignment lands each centroid at mean / K.
        let z = Matrix::from_vec(2, 1, vec![2.0, 6.0]).unwrap();
        let probs = Matrix::from_vec(2, 2, vec![0.5; 4]).unwrap();
        let delta = AssignmentMatrix::new(probs).unwrap();
        let prev = CentroidState { centroids: Matrix::zeros(2, 1), block_index: 0 };
        let next =
            update_centroids_with(&z, &delta, &prev, CentroidNormalization::Global).unwrap();
        for j in 0..2 {
            assert!((next.centroids.get(j, 0) - 2.0).abs() <= 1e-12); // (0.5*2 + 0.5*6) / 2
        }
    }

    #[test]
    fn update_empty_cluster_keeps_previous_centroid() {
        let z = Matrix::from_vec(2, 2, vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        let probs = Matrix::from_vec(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let delta = AssignmentMatrix::new(probs).unwrap();
        let prev = CentroidState {
            centroids: Matrix::from_vec(2, 2, vec![0.0, 0.0, 7.0, -7.0]).unwrap(),
            block_index: 3,
        };
        let next = update_centroids(&z, &delta, &prev).unwrap();
        assert_eq!(next.centroids.row(0), &[2.0, 2.0]);
        assert_eq!(next.centroids.row(1), &[7.0, -7.0]);
        assert_eq!(next.block_index, 4);
    }

    #[test]
    fn init_identity_rows() {
        let cfg = BlockStackConfig::new(1, 3, 3).unwrap();
        let state = init_centroids(&cfg, 0).unwrap();
        assert_eq!(state.centroids, Matrix::identity(3));
        assert_eq!(state.block_index, 0);

        let cfg = BlockStackConfig::new(1, 4, 2).unwrap();
        let state = init_centroids(&cfg, 0).unwrap();
        assert_eq!(state.centroids.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(state.centroids.row(1), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn init_random_is_orthonormal_and_reproducible() {
        let cfg = BlockStackConfig::new(1, 5, 3)
            .unwrap()
            .with_init(CentroidInit::RandomOrthonormal);
        let a = init_centroids(&cfg, 17).unwrap();
        let b = init_centroids(&cfg, 17).unwrap();
        assert_eq!(a.centroids.data(), b.centroids.data());
        let gram = a.centroids.matmul_transposed(&a.centroids).unwrap();
        assert!(gram.sub(&Matrix::identity(3)).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn config_rejects_k_above_b() {
        assert!(matches!(BlockStackConfig::new(1, 2, 3), Err(Error::Config(_))));
    }

    #[test]
    fn stack_trace_has_expected_lengths() {
        let cfg = BlockStackConfig::new(3, 2, 2).unwrap();
        let sp = euclidean_params(2, 1.0);
        let z = Matrix::from_vec(4, 2, vec![0.1, 0.0, 0.2, 0.1, 5.0, 5.0, 5.1, 4.9]).unwrap();
        let trace = run_stack(&z, &cfg, &sp, 0).unwrap();
        assert_eq!(trace.states.len(), 4);
        assert_eq!(trace.assignments.len(), 3);
        assert_eq!(trace.states[3].block_index, 3);
        let summary = trace.summary();
        assert_eq!(summary.blocks.len(), 4);
        assert!(summary.blocks[0].assignments_summary.is_none());
        assert!(summary.blocks[1].assignments_summary.is_some());
    }

    #[test]
    fn stack_is_invariant_to_row_permutation() {
        let cfg = BlockStackConfig::new(4, 2, 2).unwrap();
        let sp = euclidean_params(2, 1.0);
        let z = Matrix::from_vec(
            5,
            2,
            vec![0.1, 0.0, 0.2, 0.1, 5.0, 5.0, 5.1, 4.9, 0.05, 0.15],
        )
        .unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let z_perm = z.select_rows(&perm);
        let trace = run_stack(&z, &cfg, &sp, 0).unwrap();
        let trace_perm = run_stack(&z_perm, &cfg, &sp, 0).unwrap();
        let final_a = &trace.states.last().unwrap().centroids;
        let final_b = &trace_perm.states.last().unwrap().centroids;
        assert!(final_a.sub(final_b).unwrap().max_abs() <= 1e-12);
        let labels = trace.labels();
        let labels_perm = trace_perm.labels();
        for (new_pos, &old_pos) in perm.iter().enumerate() {
            assert_eq!(labels_perm[new_pos], labels[old_pos]);
        }
    }
}
