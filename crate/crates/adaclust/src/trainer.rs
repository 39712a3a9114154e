//! The optimization loop (Adam with decoupled weight decay), checkpoint
//! persistence, and the single-forward-pass transfer evaluation protocol.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, FdEval, GradientReport, ParamBlock, Scalar, Tape};
use crate::datagen::{batch_indices, DomainPair};
use crate::error::{Error, Result};
use crate::graph::{self, GTrace, SMat};
use crate::linalg::{ActivationKind, Matrix};
use crate::metrics::MetricsReport;
use crate::model::{
    init_centroids, BlockStackConfig, EncoderParams, ScoreParameterization, ScoreParams,
    StackTrace,
};
use crate::objectives::{LossBreakdown, LossWeights};

/// Everything the optimizer touches: encoder weights plus the raw score
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub score: ScoreParams,
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub stack: BlockStackConfig,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Activation inside the learned score.
    pub activation: ActivationKind,
    pub temperature: f64,
    /// Ablation: use the raw (possibly asymmetric) score matrices.
    pub variant_r: bool,
    /// Ablation: drop the orthogonality penalty.
    pub variant_o: bool,
    /// Ablation: drop the entropy term.
    pub variant_e: bool,
    /// Use the tied positive-definite parameterization of the score
    /// matrices (relevant for non-ReLU activations).
    pub psd_mode: bool,
    /// Scale of the seeded noise added to the identity initialization of the
    /// raw score matrices.
    pub score_init_noise: f64,
    /// Evaluate in batches of this size instead of one full pass
    /// (None = single full-dataset batch).
    pub eval_batch_size: Option<usize>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.weights.num_blocks() != self.stack.num_blocks {
            return Err(Error::Config(format!(
                "loss weights cover {} blocks but the stack has {}",
                self.weights.num_blocks(),
                self.stack.num_blocks
            )));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("encoder widths must be positive".to_string()));
        }
        Ok(())
    }

    /// Loss weights with the ablation flags applied.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights.clone();
        if self.variant_o {
            w.orthogonality_weight = 0.0;
        }
        if self.variant_e {
            w.entropy_weight = 0.0;
        }
        w
    }

    /// Score parameterization with the ablation flags applied.
    pub fn effective_parameterization(&self) -> ScoreParameterization {
        if self.variant_r {
            ScoreParameterization::Raw
        } else if self.psd_mode {
            ScoreParameterization::PsdTied
        } else {
            ScoreParameterization::Symmetrized
        }
    }
}

/// Mixes a seed and a stream index into an independent sub-seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seeded initialization of all trainable parameters: He-style encoder
/// weights and identity-plus-noise raw score matrices.
pub fn init_params(cfg: &TrainConfig) -> Result<ModelParams> {
    cfg.validate()?;
    let dims = [cfg.input_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.stack.embedding_dim];
    let encoder = EncoderParams::mlp(&dims, ActivationKind::ReLU, derive_seed(cfg.seed, 1))?;
    let b = cfg.stack.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 2));
    let mut noisy_identity = || -> Result<Matrix> {
        let mut m = Matrix::identity(b);
        for i in 0..b {
            for j in 0..b {
                let noise: f64 = StandardNormal.sample(&mut rng);
                m.set(i, j, m.get(i, j) + cfg.score_init_noise * noise);
            }
        }
        Ok(m)
    };
    let score = ScoreParams::new(
        noisy_identity()?,
        noisy_identity()?,
        cfg.activation,
        cfg.temperature,
        cfg.effective_parameterization(),
    )?;
    Ok(ModelParams { encoder, score })
}

/// Names, shapes and flattening order of every parameter segment.
pub fn param_layout(params: &ModelParams) -> Vec<(String, usize, usize)> {
    let mut layout = Vec::new();
    for (i, layer) in params.encoder.layers.iter().enumerate() {
        layout.push((format!("encoder.{i}.weight"), layer.weight.rows(), layer.weight.cols()));
        layout.push((format!("encoder.{i}.bias"), 1, layer.bias.len()));
    }
    layout.push(("score.query_raw".to_string(), params.score.query_raw.rows(), params.score.query_raw.cols()));
    layout.push(("score.key_raw".to_string(), params.score.key_raw.rows(), params.score.key_raw.cols()));
    layout
}

/// Flattens all parameters in layout order.
pub fn flatten_params(params: &ModelParams) -> Vec<f64> {
    let mut flat = Vec::new();
    for layer in &params.encoder.layers {
        flat.extend_from_slice(layer.weight.data());
        flat.extend_from_slice(&layer.bias);
    }
    flat.extend_from_slice(params.score.query_raw.data());
    flat.extend_from_slice(params.score.key_raw.data());
    flat
}

/// Rebuilds parameters from a flat vector laid out like `template`.
pub fn unflatten_params(template: &ModelParams, flat: &[f64]) -> Result<ModelParams> {
    let mut params = template.clone();
    let mut offset = 0usize;
    let mut take = |len: usize| -> Result<&[f64]> {
        if offset + len > flat.len() {
            return Err(Error::Shape {
                context: "unflatten_params",
                detail: format!("flat vector too short: need {} more values", offset + len - flat.len()),
            });
        }
        let slice = &flat[offset..offset + len];
        offset += len;
        Ok(slice)
    };
    for layer in &mut params.encoder.layers {
        let (r, c) = (layer.weight.rows(), layer.weight.cols());
        layer.weight = Matrix::from_vec(r, c, take(r * c)?.to_vec())?;
        let bias_len = layer.bias.len();
        layer.bias = take(bias_len)?.to_vec();
    }
    let b = params.score.query_raw.rows();
    params.score.query_raw = Matrix::from_vec(b, b, take(b * b)?.to_vec())?;
    params.score.key_raw = Matrix::from_vec(b, b, take(b * b)?.to_vec())?;
    if offset != flat.len() {
        return Err(Error::Shape {
            context: "unflatten_params",
            detail: format!("flat vector has {} extra values", flat.len() - offset),
        });
    }
    Ok(params)
}

struct LiftedModel<S> {
    layers: Vec<(SMat<S>, Vec<S>)>,
    query_raw: SMat<S>,
    key_raw: SMat<S>,
}

/// Builds the full loss for one batch, generically over the scalar backend.
fn forward_parts<S: Scalar>(
    lifted: &LiftedModel<S>,
    x: &SMat<S>,
    init: &SMat<S>,
    cfg: &TrainConfig,
) -> Result<(graph::LossPartsG<S>, GTrace<S>)> {
    let z = graph::encode_g(&lifted.layers, ActivationKind::ReLU, x);
    let (wq, wk) = graph::effective_score_matrices(
        &lifted.query_raw,
        &lifted.key_raw,
        cfg.effective_parameterization(),
    );
    let trace = graph::stack_forward(
        &z,
        &wq,
        &wk,
        init,
        cfg.stack.num_blocks,
        cfg.activation,
        cfg.temperature,
        cfg.stack.normalization,
    );
    let w = cfg.effective_weights();
    let parts = graph::total_loss_g(
        &trace,
        &wq,
        &wk,
        &w.block_weights,
        w.entropy_weight,
        w.orthogonality_weight,
        w.literal_entropy,
        x.rows,
    )?;
    Ok((parts, trace))
}

fn breakdown_from_parts<S: Scalar>(parts: &graph::LossPartsG<S>) -> LossBreakdown {
    LossBreakdown {
        clustering: parts.clustering.value(),
        entropy: parts.entropy.value(),
        orthogonality: parts.orthogonality.value(),
        total: parts.total.value(),
    }
}

/// Loss of one batch without building a tape.
pub fn loss_on_batch(params: &ModelParams, x: &Matrix, cfg: &TrainConfig) -> Result<LossBreakdown> {
    let lifted = LiftedModel {
        layers: params.encoder.lift(0.0),
        query_raw: SMat::lift(&params.score.query_raw, 0.0),
        key_raw: SMat::lift(&params.score.key_raw, 0.0),
    };
    let init = init_centroids(&cfg.stack, derive_seed(cfg.seed, 3))?;
    let (parts, _) = forward_parts(&lifted, &SMat::lift(x, 0.0), &SMat::lift(&init.centroids, 0.0), cfg)?;
    Ok(breakdown_from_parts(&parts))
}

/// Loss of one batch together with the smallest kink margin seen on the
/// tape; for the derivative checker.
pub fn loss_eval_for_fd(params: &ModelParams, x: &Matrix, cfg: &TrainConfig) -> Result<FdEval> {
    let (breakdown, _, tape) = taped_forward(params, x, cfg)?;
    Ok(FdEval { loss: breakdown.total, kink_margin: tape.kink_margin() })
}

fn taped_forward(
    params: &ModelParams,
    x: &Matrix,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<ParamBlock>, Tape)> {
    let init = init_centroids(&cfg.stack, derive_seed(cfg.seed, 3))?;
    let mut blocks: Vec<ParamBlock> = Vec::new();
    let mut breakdown: Option<LossBreakdown> = None;
    let (_, tape) = autodiff::forward(|t| {
        let mut register = |name: String, m: &Matrix| -> SMat<autodiff::Var<'_>> {
            let lifted = SMat::from_fn(m.rows(), m.cols(), |i, j| t.input(m.get(i, j)));
            blocks.push(ParamBlock {
                name,
                rows: m.rows(),
                cols: m.cols(),
                indices: lifted.data.iter().map(|v| v.index()).collect(),
            });
            lifted
        };
        let mut layers = Vec::with_capacity(params.encoder.layers.len());
        for (i, layer) in params.encoder.layers.iter().enumerate() {
            let w = register(format!("encoder.{i}.weight"), &layer.weight);
            let bias_mat = Matrix::from_vec(1, layer.bias.len(), layer.bias.clone())?;
            let b = register(format!("encoder.{i}.bias"), &bias_mat);
            layers.push((w, b.data));
        }
        let query_raw = register("score.query_raw".to_string(), &params.score.query_raw);
        let key_raw = register("score.key_raw".to_string(), &params.score.key_raw);
        let lifted = LiftedModel { layers, query_raw, key_raw };
        let witness = t.constant(0.0);
        let x_lift = SMat::lift(x, witness);
        let init_lift = SMat::lift(&init.centroids, witness);
        let (parts, _) = forward_parts(&lifted, &x_lift, &init_lift, cfg)?;
        breakdown = Some(breakdown_from_parts(&parts));
        Ok(parts.total)
    })?;
    let breakdown = breakdown.expect("forward closure ran");
    Ok((breakdown, blocks, tape))
}

/// Loss and analytic gradients of one batch.
pub fn gradients_on_batch(
    params: &ModelParams,
    x: &Matrix,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, GradientReport)> {
    let (breakdown, blocks, tape) = taped_forward(params, x, cfg)?;
    let adjoints = autodiff::backward(&tape)?;
    let report = GradientReport::from_adjoints(&adjoints, &blocks)?;
    Ok((breakdown, report))
}

/// First/second moment state for Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected Adam update with decoupled weight decay (the decay
/// multiplies the parameters before the moment update is applied).
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
    weight_decay: f64,
    betas: (f64, f64),
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len()
        || params.len() != state.first_moment.len()
        || params.len() != state.second_moment.len()
    {
        return Err(Error::Shape {
            context: "adam_step",
            detail: format!(
                "{} params, {} grads, {} moment entries",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        });
    }
    let (beta1, beta2) = betas;
    state.step += 1;
    let bias1 = 1.0 - beta1.powi(state.step as i32);
    let bias2 = 1.0 - beta2.powi(state.step as i32);
    let decay = 1.0 - learning_rate * weight_decay;
    for i in 0..params.len() {
        params[i] *= decay;
        state.first_moment[i] = beta1 * state.first_moment[i] + (1.0 - beta1) * grads[i];
        state.second_moment[i] = beta2 * state.second_moment[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = state.first_moment[i] / bias1;
        let v_hat = state.second_moment[i] / bias2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable training state. JSON numbers are written in the shortest
/// form that round-trips exactly, so reloading reproduces forward outputs
/// bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
    /// Master seed; the shuffle stream of epoch `e` derives from it.
    pub rng_seed: u64,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let json = serde_json::to_string(ckpt)
        .map_err(|e| Error::Persistence(format!("cannot serialize checkpoint: {e}")))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, json)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let content = fs::read_to_string(path)
        .map_err(|e| Error::Persistence(format!("cannot read {}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&content)
        .map_err(|e| Error::Persistence(format!("corrupt checkpoint {}: {e}", path.display())))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Persistence(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok(ckpt)
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub epoch_losses: Vec<LossBreakdown>,
    pub wall_time_secs: f64,
}

/// Trains on the given source features. Deterministic for a fixed seed.
pub fn train(source_x: &Matrix, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if source_x.cols() != cfg.input_dim {
        return Err(Error::Config(format!(
            "data has {} features but the config expects {}",
            source_x.cols(),
            cfg.input_dim
        )));
    }
    let start = Instant::now();
    let mut params = init_params(cfg)?;
    let mut flat = flatten_params(&params);
    let mut adam = AdamState::zeros(flat.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut last_finite: Option<LossBreakdown> = None;
    for epoch in 0..cfg.epochs {
        let batches = batch_indices(
            source_x.rows(),
            cfg.batch_size,
            derive_seed(cfg.seed, 1000 + epoch as u64),
        )?;
        let mut acc = LossBreakdown { clustering: 0.0, entropy: 0.0, orthogonality: 0.0, total: 0.0 };
        let mut seen = 0usize;
        for (batch_no, batch) in batches.iter().enumerate() {
            let x_batch = source_x.select_rows(batch);
            let (breakdown, report) = gradients_on_batch(&params, &x_batch, cfg)?;
            if !breakdown.total.is_finite() {
                return Err(Error::TrainDiverged {
                    epoch,
                    batch: batch_no,
                    detail: match last_finite {
                        Some(b) => format!(
                            "last finite breakdown: clustering {:.6}, entropy {:.6}, orthogonality {:.6}, total {:.6}",
                            b.clustering, b.entropy, b.orthogonality, b.total
                        ),
                        None => "no finite loss was ever observed".to_string(),
                    },
                });
            }
            last_finite = Some(breakdown);
            let grads = report.flat();
            adam_step(
                &mut flat,
                &grads,
                &mut adam,
                cfg.learning_rate,
                cfg.weight_decay,
                (0.9, 0.999),
                1e-8,
            )?;
            params = unflatten_params(&params, &flat)?;
            let w = batch.len() as f64;
            acc.clustering += breakdown.clustering * w;
            acc.entropy += breakdown.entropy * w;
            acc.orthogonality += breakdown.orthogonality * w;
            acc.total += breakdown.total * w;
            seen += batch.len();
        }
        let scale = 1.0 / seen as f64;
        epoch_losses.push(LossBreakdown {
            clustering: acc.clustering * scale,
            entropy: acc.entropy * scale,
            orthogonality: acc.orthogonality * scale,
            total: acc.total * scale,
        });
    }
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: cfg.clone(),
        params,
        adam,
        epoch: cfg.epochs,
        rng_seed: cfg.seed,
    };
    Ok(TrainOutcome { checkpoint, epoch_losses, wall_time_secs: start.elapsed().as_secs_f64() })
}

/// Runs encoder and block stack on a batch (no gradients, no updates).
pub fn model_forward(params: &ModelParams, cfg: &TrainConfig, x: &Matrix) -> Result<(Matrix, StackTrace)> {
    let z = crate::model::encode(&params.encoder, x)?;
    let trace = crate::model::run_stack(&z, &cfg.stack, &params.score, derive_seed(cfg.seed, 3))?;
    Ok((z, trace))
}

/// Predicted hard labels for a batch, honoring `eval_batch_size`.
pub fn predict_labels(params: &ModelParams, cfg: &TrainConfig, x: &Matrix) -> Result<Vec<usize>> {
    match cfg.eval_batch_size {
        None => Ok(model_forward(params, cfg, x)?.1.labels()),
        Some(batch) if x.rows() <= batch => Ok(model_forward(params, cfg, x)?.1.labels()),
        Some(batch) => {
            // Sequential batches; centroids re-adapt per batch and the labels
            // are pooled.
            let mut labels = Vec::with_capacity(x.rows());
            let mut start = 0usize;
            while start < x.rows() {
                let end = (start + batch).min(x.rows());
                let indices: Vec<usize> = (start..end).collect();
                let slice = x.select_rows(&indices);
                labels.extend(model_forward(params, cfg, &slice)?.1.labels());
                start = end;
            }
            Ok(labels)
        }
    }
}

/// One run's provenance and results; the same schema is used for the
/// adaptive model and for all baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub model: String,
    pub config: serde_json::Value,
    pub epoch_losses: Vec<LossBreakdown>,
    pub source: Option<MetricsReport>,
    pub target: Option<MetricsReport>,
    pub diff: Option<MetricsReport>,
    pub wall_time_secs: f64,
}

pub const RUN_RECORD_VERSION: u32 = 1;

impl RunRecord {
    pub fn new(model: impl Into<String>, config: serde_json::Value) -> Self {
        RunRecord {
            schema_version: RUN_RECORD_VERSION,
            model: model.into(),
            config,
            epoch_losses: Vec::new(),
            source: None,
            target: None,
            diff: None,
            wall_time_secs: 0.0,
        }
    }

    /// Stores metrics; the diff row is derived, never set independently.
    pub fn set_metrics(&mut self, source: MetricsReport, target: Option<MetricsReport>) {
        self.diff = target.as_ref().map(|t| source.diff(t));
        self.source = Some(source);
        self.target = target;
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Persistence(format!("cannot serialize run record: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path)
            .map_err(|e| Error::Persistence(format!("cannot read {}: {e}", path.display())))?;
        let record: RunRecord = serde_json::from_str(&content)
            .map_err(|e| Error::Persistence(format!("corrupt run record {}: {e}", path.display())))?;
        if record.schema_version != RUN_RECORD_VERSION {
            return Err(Error::Persistence(format!(
                "run record version {} is not supported (expected {RUN_RECORD_VERSION})",
                record.schema_version
            )));
        }
        Ok(record)
    }
}

/// Features with ground-truth labels, as loaded from a dataset file.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn from_domain(domain: &crate::datagen::Domain) -> Self {
        LabeledDataset { features: domain.features.clone(), labels: domain.labels.clone() }
    }
}

/// Evaluates a trained checkpoint on a source and target dataset with a
/// single forward pass each (centroid adaptation included, no parameter
/// updates).
pub fn evaluate_transfer_datasets(
    ckpt: &Checkpoint,
    source: &LabeledDataset,
    target: &LabeledDataset,
) -> Result<RunRecord> {
    if source.features.cols() != ckpt.config.input_dim
        || target.features.cols() != ckpt.config.input_dim
    {
        return Err(Error::Config(format!(
            "checkpoint expects {} features but the datasets have {} / {}",
            ckpt.config.input_dim,
            source.features.cols(),
            target.features.cols()
        )));
    }
    let start = Instant::now();
    let source_pred = predict_labels(&ckpt.params, &ckpt.config, &source.features)?;
    let target_pred = predict_labels(&ckpt.params, &ckpt.config, &target.features)?;
    let source_metrics = MetricsReport::evaluate(&source_pred, &source.labels)?;
    let target_metrics = MetricsReport::evaluate(&target_pred, &target.labels)?;
    let mut record = RunRecord::new(
        "adaclust",
        serde_json::to_value(&ckpt.config)
            .map_err(|e| Error::Persistence(format!("cannot echo config: {e}")))?,
    );
    record.set_metrics(source_metrics, Some(target_metrics));
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(record)
}

/// [`evaluate_transfer_datasets`] on a generated domain pair.
pub fn evaluate_transfer(ckpt: &Checkpoint, pair: &DomainPair) -> Result<RunRecord> {
    evaluate_transfer_datasets(
        ckpt,
        &LabeledDataset::from_domain(&pair.source),
        &LabeledDataset::from_domain(&pair.target),
    )
}
