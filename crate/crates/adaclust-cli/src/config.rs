//! The flat experiment configuration: every key has a documented default,
//! values come from a `key = value` config file, and command-line flags
//! override both. Unknown keys are rejected.

use std::path::Path;

use adaclust::datagen::DomainSpec;
use adaclust::linalg::ActivationKind;
use adaclust::model::{BlockStackConfig, CentroidInit, CentroidNormalization};
use adaclust::objectives::{AlphaMode, LossWeights};
use adaclust::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Fully resolved experiment configuration (dataset + model + training).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    // Dataset generation
    pub k: usize,
    pub dim: usize,
    pub n_per_cluster: usize,
    pub center_box: f64,
    pub cov_scale: f64,
    pub perturbation: f64,
    pub data_seed: u64,
    // Optimization
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    // Model
    pub num_blocks: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub activation: String,
    pub tau: f64,
    pub alpha_mode: String,
    pub beta: f64,
    pub lambda_orth: f64,
    pub init_mode: String,
    pub score_init_noise: f64,
    // Ablations and comparison flags
    pub variant_r: bool,
    pub variant_o: bool,
    pub variant_e: bool,
    pub psd_mode: bool,
    pub global_normalization: bool,
    pub literal_entropy: bool,
    // Evaluation / baselines
    pub eval_batch_size: usize,
    pub baseline_init: String,
    pub baseline_max_iter: usize,
    pub baseline_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k: 3,
            dim: 16,
            n_per_cluster: 500,
            center_box: 5.0,
            cov_scale: 1.0,
            perturbation: 0.5,
            data_seed: 0,
            seed: 0,
            epochs: 500,
            batch_size: 256,
            learning_rate: 5e-3,
            weight_decay: 5e-4,
            num_blocks: 4,
            embedding_dim: 16,
            hidden_dim: 32,
            activation: "relu".to_string(),
            tau: 1.0,
            alpha_mode: "linear".to_string(),
            beta: 1.0,
            lambda_orth: 1.0,
            init_mode: "identity".to_string(),
            score_init_noise: 0.01,
            variant_r: false,
            variant_o: false,
            variant_e: false,
            psd_mode: false,
            global_normalization: false,
            literal_entropy: false,
            eval_batch_size: 0,
            baseline_init: "kmeans++".to_string(),
            baseline_max_iter: 300,
            baseline_tol: 1e-8,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| CliError::Usage(format!("bad value `{value}` for key `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(CliError::Usage(format!("bad boolean `{other}` for key `{key}`"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Unknown keys are rejected.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        match key {
            "k" => self.k = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "n-per-cluster" => self.n_per_cluster = parse(key, value)?,
            "center-box" => self.center_box = parse(key, value)?,
            "cov-scale" => self.cov_scale = parse(key, value)?,
            "perturbation" => self.perturbation = parse(key, value)?,
            "data-seed" => self.data_seed = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "learning-rate" => self.learning_rate = parse(key, value)?,
            "weight-decay" => self.weight_decay = parse(key, value)?,
            "num-blocks" => self.num_blocks = parse(key, value)?,
            "embedding-dim" => self.embedding_dim = parse(key, value)?,
            "hidden-dim" => self.hidden_dim = parse(key, value)?,
            "activation" => self.activation = value.to_string(),
            "tau" => self.tau = parse(key, value)?,
            "alpha-mode" => self.alpha_mode = value.to_string(),
            "beta" => self.beta = parse(key, value)?,
            "lambda-orth" => self.lambda_orth = parse(key, value)?,
            "init-mode" => self.init_mode = value.to_string(),
            "score-init-noise" => self.score_init_noise = parse(key, value)?,
            "variant-r" => self.variant_r = parse_bool(key, value)?,
            "variant-o" => self.variant_o = parse_bool(key, value)?,
            "variant-e" => self.variant_e = parse_bool(key, value)?,
            "psd-mode" => self.psd_mode = parse_bool(key, value)?,
            "global-normalization" => self.global_normalization = parse_bool(key, value)?,
            "literal-entropy" => self.literal_entropy = parse_bool(key, value)?,
            "eval-batch-size" => self.eval_batch_size = parse(key, value)?,
            "baseline-init" => self.baseline_init = value.to_string(),
            "baseline-max-iter" => self.baseline_max_iter = parse(key, value)?,
            "baseline-tol" => self.baseline_tol = parse(key, value)?,
            unknown => {
                return Err(CliError::Usage(format!("unknown configuration key `{unknown}`")))
            }
        }
        Ok(())
    }

    /// Reads a flat `key = value` file (`#` starts a comment).
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let content = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
        })?;
        for (no, raw) in content.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {} is not `key = value`: `{raw}`",
                    no + 1
                ))
            })?;
            self.apply_kv(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parsed_activation(&self) -> Result<ActivationKind, CliError> {
        match self.activation.as_str() {
            "relu" => Ok(ActivationKind::ReLU),
            "identity" => Ok(ActivationKind::Identity),
            other => {
                if let Some(slope) = other.strip_prefix("leaky:") {
                    let slope: f64 = parse("activation", slope)?;
                    ActivationKind::leaky_relu(slope)
                        .map_err(|e| CliError::Usage(e.to_string()))
                } else {
                    Err(CliError::Usage(format!(
                        "unknown activation `{other}` (expected relu, identity, or leaky:<slope>)"
                    )))
                }
            }
        }
    }

    pub fn parsed_alpha_mode(&self) -> Result<AlphaMode, CliError> {
        match self.alpha_mode.as_str() {
            "linear" => Ok(AlphaMode::Linear),
            "last-only" => Ok(AlphaMode::LastOnly),
            "uniform" => Ok(AlphaMode::Uniform),
            other => Err(CliError::Usage(format!(
                "unknown alpha-mode `{other}` (expected linear, last-only, or uniform)"
            ))),
        }
    }

    pub fn domain_spec(&self) -> DomainSpec {
        DomainSpec {
            num_clusters: self.k,
            dim: self.dim,
            n_per_cluster: self.n_per_cluster,
            center_box: self.center_box,
            cov_scale: self.cov_scale,
            seed: self.data_seed,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let activation = self.parsed_activation()?;
        let alpha_mode = self.parsed_alpha_mode()?;
        let mut stack = BlockStackConfig::new(self.num_blocks, self.embedding_dim, self.k)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        stack = stack.with_init(match self.init_mode.as_str() {
            "identity" => CentroidInit::IdentityRows,
            "random" => CentroidInit::RandomOrthonormal,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown init-mode `{other}` (expected identity or random)"
                )))
            }
        });
        if self.global_normalization {
            stack = stack.with_normalization(CentroidNormalization::Global);
        }
        let mut weights =
            LossWeights::scheduled(self.num_blocks, alpha_mode, self.beta, self.lambda_orth)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        weights.literal_entropy = self.literal_entropy;
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed,
            weights,
            stack,
            input_dim: self.dim,
            hidden_dim: self.hidden_dim,
            activation,
            temperature: self.tau,
            variant_r: self.variant_r,
            variant_o: self.variant_o,
            variant_e: self.variant_e,
            psd_mode: self.psd_mode,
            score_init_noise: self.score_init_noise,
            eval_batch_size: if self.eval_batch_size == 0 {
                None
            } else {
                Some(self.eval_batch_size)
            },
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// The fully resolved configuration as a JSON value, for echoing into
    /// output artifacts.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
