use std::path::PathBuf;
use std::process::ExitCode;

use adaclust_cli::config::ExperimentConfig;
use adaclust_cli::{commands, resolve_out_path, CliError, CliResult};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adaclust",
    version,
    about = "Clustering with batch-adaptive centroids: dataset generation, training, transfer evaluation, baselines, sweeps, and trace export"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration overrides shared by the compute subcommands. Precedence:
/// built-in defaults < --config file < these flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of clusters K.
    #[arg(long)]
    k: Option<usize>,
    /// Input feature dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Samples per cluster.
    #[arg(long = "n-per-cluster")]
    n_per_cluster: Option<usize>,
    /// Center drift scale relative to the mean pairwise center distance.
    #[arg(long)]
    perturbation: Option<f64>,
    /// Seed for dataset generation.
    #[arg(long = "data-seed")]
    data_seed: Option<u64>,
    /// Seed for parameter initialization and batching.
    #[arg(long)]
    seed: Option<u64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    /// Softmax temperature of the score function.
    #[arg(long)]
    tau: Option<f64>,
    /// Number of centroid update blocks.
    #[arg(long = "num-blocks")]
    num_blocks: Option<usize>,
    /// Embedding dimension.
    #[arg(long = "embedding-dim")]
    embedding_dim: Option<usize>,
    /// Ablation: drop the symmetry constraint on the score matrices.
    #[arg(long = "variant-R", visible_alias = "variant-r")]
    variant_r: bool,
    /// Ablation: drop the orthogonality penalty.
    #[arg(long = "variant-O", visible_alias = "variant-o")]
    variant_o: bool,
    /// Ablation: drop the entropy term.
    #[arg(long = "variant-E", visible_alias = "variant-e")]
    variant_e: bool,
    /// Any other configuration key, repeatable (e.g. --set beta=10).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        macro_rules! over {
            ($field:ident, $key:literal) => {
                if let Some(v) = &self.$field {
                    cfg.apply_kv($key, &v.to_string())?;
                }
            };
        }
        over!(k, "k");
        over!(dim, "dim");
        over!(n_per_cluster, "n-per-cluster");
        over!(perturbation, "perturbation");
        over!(data_seed, "data-seed");
        over!(seed, "seed");
        over!(epochs, "epochs");
        over!(batch_size, "batch-size");
        over!(learning_rate, "learning-rate");
        over!(tau, "tau");
        over!(num_blocks, "num-blocks");
        over!(embedding_dim, "embedding-dim");
        if self.variant_r {
            cfg.apply_kv("variant-r", "true")?;
        }
        if self.variant_o {
            cfg.apply_kv("variant-o", "true")?;
        }
        if self.variant_e {
            cfg.apply_kv("variant-e", "true")?;
        }
        for kv in &self.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`"))
            })?;
            cfg.apply_kv(key.trim(), value)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic source/target dataset pairs.
    Generate {
        /// Output directory for CSVs and metadata sidecars.
        #[arg(long)]
        out: PathBuf,
        /// How many independent pairs to generate.
        #[arg(long = "num-pairs", default_value_t = 1)]
        num_pairs: usize,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Train the adaptive clustering model on a source dataset.
    Train {
        /// Source CSV (with labels).
        #[arg(long)]
        source: PathBuf,
        /// Directory for checkpoint.json and train_record.json.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Transfer-evaluate a checkpoint on a source/target pair.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Where to write the run record (JSON).
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Classical baseline: fit on source, frozen centroids on target.
    Baseline {
        /// One of: kmeans, gmm, soft-kmeans.
        #[arg(long)]
        algo: String,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Where to write the run record (JSON).
        #[arg(long)]
        record: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// One run per (axis value, seed); emits a CSV metrics table.
    Sweep {
        /// One of: tau, num-blocks, alpha-mode, beta, perturbation.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Seeds per value.
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Parallel jobs (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Dump the per-block centroid trajectory of one forward pass.
    TraceCentroids {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV to adapt on.
        #[arg(long)]
        data: PathBuf,
        /// Output JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate run records into a model x split metric matrix.
    Report {
        /// Directory of run-record JSON files.
        #[arg(long)]
        dir: PathBuf,
        /// Optional CSV output of the aggregated table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { out, num_pairs, overrides } => {
            let cfg = overrides.resolve()?;
            commands::cmd_generate(&cfg, &resolve_out_path(&out), num_pairs)
        }
        Command::Train { source, out_dir, overrides } => {
            let cfg = overrides.resolve()?;
            commands::cmd_train(&cfg, &source, &resolve_out_path(&out_dir))
        }
        Command::Eval { checkpoint, source, target, record } => commands::cmd_eval(
            &checkpoint,
            &source,
            &target,
            record.map(|p| resolve_out_path(&p)).as_deref(),
        ),
        Command::Baseline { algo, source, target, record, overrides } => {
            let cfg = overrides.resolve()?;
            commands::cmd_baseline(
                &algo,
                &cfg,
                &source,
                &target,
                record.map(|p| resolve_out_path(&p)).as_deref(),
            )
        }
        Command::Sweep { axis, values, seeds, jobs, out, overrides } => {
            let cfg = overrides.resolve()?;
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_string)
                .collect();
            commands::cmd_sweep(&axis, &values, seeds, jobs, &cfg, &resolve_out_path(&out))
        }
        Command::TraceCentroids { checkpoint, data, out } => {
            commands::cmd_trace_centroids(&checkpoint, &data, &resolve_out_path(&out))
        }
        Command::Report { dir, out } => {
            commands::cmd_report(&dir, out.map(|p| resolve_out_path(&p)).as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
