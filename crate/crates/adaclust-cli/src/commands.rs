//! Implementations of the CLI subcommands.

use std::fs;
use std::path::Path;
use std::time::Instant;

use adaclust::baselines::{
    gmm_em_shared, kmeans_lloyd, kmeans_plus_plus_init, soft_kmeans_step,
    transfer_eval_fixed_centroids, GmmResult, KMeansResult, SourceModel,
};
use adaclust::datagen::{load_tabular, make_pair, save_domain_pair};
use adaclust::linalg::{symmetric_top_eigvecs, Matrix};
use adaclust::metrics::MetricsReport;
use adaclust::trainer::{
    self, derive_seed, evaluate_transfer_datasets, load_checkpoint, save_checkpoint,
    LabeledDataset, RunRecord,
};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::{CliError, CliResult};

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize output: {e}")))?;
    fs::write(path, json)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn load_labeled(path: &Path) -> CliResult<LabeledDataset> {
    let (features, labels) = load_tabular(path, true)?;
    Ok(LabeledDataset { features, labels: labels.expect("labels requested") })
}

/// One-line metric summary in the shape `source | target | diff`.
pub fn summary_line(record: &RunRecord) -> String {
    let fmt = |m: &Option<MetricsReport>| match m {
        Some(m) => format!("{:.3}/{:.3}/{:.3}", m.nmi, m.ari, m.acc),
        None => "-".to_string(),
    };
    format!(
        "NMI/ARI/ACC  source {} | target {} | diff {}",
        fmt(&record.source),
        fmt(&record.target),
        fmt(&record.diff)
    )
}

/// `generate`: writes `--num-pairs` source/target dataset pairs plus a
/// manifest echoing the resolved configuration.
pub fn cmd_generate(cfg: &ExperimentConfig, out_dir: &Path, num_pairs: usize) -> CliResult<()> {
    if num_pairs == 0 {
        return Err(CliError::Usage("--num-pairs must be at least 1".to_string()));
    }
    let spec = cfg.domain_spec();
    spec.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut files = Vec::new();
    for pair_no in 0..num_pairs {
        let mut pair_spec = spec.clone();
        pair_spec.seed = derive_seed(cfg.data_seed, 2 * pair_no as u64);
        let target_seed = derive_seed(cfg.data_seed, 2 * pair_no as u64 + 1);
        let pair = make_pair(&pair_spec, cfg.perturbation, target_seed)?;
        let stem = format!("pair{pair_no:03}");
        save_domain_pair(out_dir, &stem, &pair)?;
        for suffix in ["source.csv", "source.meta.json", "target.csv", "target.meta.json"] {
            files.push(format!("{stem}_{suffix}"));
        }
    }
    let manifest = json!({
        "config": cfg.echo(),
        "num_pairs": num_pairs,
        "files": files,
    });
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    println!("wrote {num_pairs} pair(s) into {}", out_dir.display());
    Ok(())
}

/// `train`: fits the model on a source CSV, writes a checkpoint and a run
/// record with source metrics (target metrics come from `eval`).
pub fn cmd_train(cfg: &ExperimentConfig, source_csv: &Path, out_dir: &Path) -> CliResult<()> {
    let train_cfg = cfg.train_config()?;
    let source = load_labeled(source_csv)?;
    if source.features.cols() != train_cfg.input_dim {
        return Err(CliError::Usage(format!(
            "dataset has {} features but the configuration says dim = {}",
            source.features.cols(),
            train_cfg.input_dim
        )));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out_dir.display())))?;
    let start = Instant::now();
    let outcome = trainer::train(&source.features, &train_cfg)?;
    let pred = trainer::predict_labels(&outcome.checkpoint.params, &train_cfg, &source.features)?;
    let source_metrics = MetricsReport::evaluate(&pred, &source.labels)?;
    let mut record = RunRecord::new("adaclust", cfg.echo());
    record.epoch_losses = outcome.epoch_losses;
    record.set_metrics(source_metrics, None);
    record.wall_time_secs = start.elapsed().as_secs_f64();

    save_checkpoint(&outcome.checkpoint, &out_dir.join("checkpoint.json"))?;
    record.save(&out_dir.join("train_record.json"))?;
    println!("{}", summary_line(&record));
    Ok(())
}

/// `eval`: transfer-evaluates a checkpoint on a source/target CSV pair.
pub fn cmd_eval(
    checkpoint_path: &Path,
    source_csv: &Path,
    target_csv: &Path,
    record_out: Option<&Path>,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint_path)?;
    let source = load_labeled(source_csv)?;
    let target = load_labeled(target_csv)?;
    let mut record = evaluate_transfer_datasets(&ckpt, &source, &target)?;
    record.model = "adaclust".to_string();
    if let Some(path) = record_out {
        record.save(path)?;
    }
    println!("{}", summary_line(&record));
    Ok(())
}

pub const BASELINE_ALGOS: [&str; 3] = ["kmeans", "gmm", "soft-kmeans"];

fn baseline_init_centroids(
    cfg: &ExperimentConfig,
    z: &Matrix,
    k: usize,
) -> CliResult<Matrix> {
    match cfg.baseline_init.as_str() {
        "kmeans++" => Ok(kmeans_plus_plus_init(z, k, derive_seed(cfg.seed, 77))?),
        // The same orthonormal initialization the adaptive model uses,
        // applicable while k <= dim.
        "orthonormal" if k <= z.cols() => {
            Ok(adaclust::linalg::random_orthonormal_rows(k, z.cols(), derive_seed(cfg.seed, 77))?)
        }
        "orthonormal" => Ok(kmeans_plus_plus_init(z, k, derive_seed(cfg.seed, 77))?),
        other => Err(CliError::Usage(format!(
            "unknown baseline-init `{other}` (expected kmeans++ or orthonormal)"
        ))),
    }
}

enum FittedBaseline {
    KMeans(KMeansResult),
    Gmm(GmmResult),
    SoftKMeans { centroids: Matrix, tau: f64 },
}

impl FittedBaseline {
    fn source_labels(&self) -> Vec<usize> {
        match self {
            FittedBaseline::KMeans(r) => r.labels.clone(),
            FittedBaseline::Gmm(r) => {
                adaclust::model::AssignmentMatrix::new(r.responsibilities.clone())
                    .map(|a| a.labels())
                    .unwrap_or_default()
            }
            FittedBaseline::SoftKMeans { .. } => Vec::new(),
        }
    }

    fn as_source_model(&self) -> SourceModel<'_> {
        match self {
            FittedBaseline::KMeans(r) => SourceModel::KMeans(r),
            FittedBaseline::Gmm(r) => SourceModel::Gmm(r),
            FittedBaseline::SoftKMeans { centroids, tau } => {
                SourceModel::SoftKMeans { centroids, tau: *tau }
            }
        }
    }
}

fn fit_baseline(
    algo: &str,
    cfg: &ExperimentConfig,
    source: &LabeledDataset,
    k: usize,
) -> CliResult<FittedBaseline> {
    let init = baseline_init_centroids(cfg, &source.features, k)?;
    match algo {
        "kmeans" => Ok(FittedBaseline::KMeans(kmeans_lloyd(
            &source.features,
            k,
            &init,
            cfg.baseline_max_iter,
            cfg.baseline_tol,
        )?)),
        "gmm" => {
            // Shared covariance initialized to the average per-coordinate
            // variance of the data.
            let mean = source.features.mean_row();
            let d = source.features.cols();
            let mut var = 0.0;
            for row in source.features.row_iter() {
                var += adaclust::linalg::squared_distance(row, &mean);
            }
            var /= (source.features.rows() * d) as f64;
            let cov = Matrix::identity(d).scale(var.max(1e-3));
            Ok(FittedBaseline::Gmm(gmm_em_shared(
                &source.features,
                k,
                &init,
                &cov,
                cfg.baseline_max_iter,
                cfg.baseline_tol,
                true,
            )?))
        }
        "soft-kmeans" => {
            let mut centroids = init;
            for _ in 0..cfg.baseline_max_iter {
                let (_, updated) = soft_kmeans_step(&source.features, &centroids, cfg.tau)?;
                let shift = updated.sub(&centroids)?.max_abs();
                centroids = updated;
                if shift < cfg.baseline_tol {
                    break;
                }
            }
            Ok(FittedBaseline::SoftKMeans { centroids, tau: cfg.tau })
        }
        other => Err(CliError::Usage(format!(
            "unknown baseline `{other}`; valid algorithms: {}",
            BASELINE_ALGOS.join(", ")
        ))),
    }
}

/// Core of `baseline`, reusable from sweeps: fit on source, freeze, assign
/// target, emit the shared run-record schema.
pub fn run_baseline(
    algo: &str,
    cfg: &ExperimentConfig,
    source: &LabeledDataset,
    target: &LabeledDataset,
) -> CliResult<RunRecord> {
    let k = cfg.k;
    let start = Instant::now();
    let fitted = fit_baseline(algo, cfg, source, k)?;
    let source_pred = match &fitted {
        FittedBaseline::SoftKMeans { .. } => {
            transfer_eval_fixed_centroids(&fitted.as_source_model(), &source.features)?
        }
        _ => fitted.source_labels(),
    };
    let target_pred = transfer_eval_fixed_centroids(&fitted.as_source_model(), &target.features)?;
    let source_metrics = MetricsReport::evaluate(&source_pred, &source.labels)?;
    let target_metrics = MetricsReport::evaluate(&target_pred, &target.labels)?;
    let mut record = RunRecord::new(algo, cfg.echo());
    record.set_metrics(source_metrics, Some(target_metrics));
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(record)
}

/// `baseline`: classical algorithm on source, frozen-centroid transfer to
/// target.
pub fn cmd_baseline(
    algo: &str,
    cfg: &ExperimentConfig,
    source_csv: &Path,
    target_csv: &Path,
    record_out: Option<&Path>,
) -> CliResult<()> {
    if !BASELINE_ALGOS.contains(&algo) {
        return Err(CliError::Usage(format!(
            "unknown baseline `{algo}`; valid algorithms: {}",
            BASELINE_ALGOS.join(", ")
        )));
    }
    let source = load_labeled(source_csv)?;
    let target = load_labeled(target_csv)?;
    let record = run_baseline(algo, cfg, &source, &target)?;
    if let Some(path) = record_out {
        record.save(path)?;
    }
    println!("{}", summary_line(&record));
    Ok(())
}

pub const SWEEP_AXES: [&str; 5] = ["tau", "num-blocks", "alpha-mode", "beta", "perturbation"];

/// One full train-and-evaluate run for a sweep cell.
fn sweep_run(cfg: &ExperimentConfig, run_seed: u64) -> CliResult<RunRecord> {
    let mut spec = cfg.domain_spec();
    spec.seed = derive_seed(cfg.data_seed, run_seed);
    let pair = make_pair(&spec, cfg.perturbation, derive_seed(cfg.data_seed, run_seed + 1))?;
    let mut train_cfg = cfg.train_config()?;
    train_cfg.seed = derive_seed(cfg.seed, run_seed);
    let outcome = trainer::train(&pair.source.features, &train_cfg)?;
    let record = trainer::evaluate_transfer(&outcome.checkpoint, &pair)?;
    Ok(record)
}

/// `sweep`: one run per (axis value, seed); emits a CSV table of metrics.
pub fn cmd_sweep(
    axis: &str,
    values: &[String],
    seeds: usize,
    jobs: usize,
    cfg: &ExperimentConfig,
    out_csv: &Path,
) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs a non-empty --values list".to_string()));
    }
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".to_string()));
    }
    if !SWEEP_AXES.contains(&axis) {
        return Err(CliError::Usage(format!(
            "unknown sweep axis `{axis}`; valid axes: {}",
            SWEEP_AXES.join(", ")
        )));
    }
    // Validate every cell's configuration before any compute.
    let mut cells = Vec::new();
    for (vi, value) in values.iter().enumerate() {
        let mut cell_cfg = cfg.clone();
        let key = if axis == "tau" { "tau" } else { axis };
        cell_cfg.apply_kv(key, value)?;
        cell_cfg.train_config()?;
        for seed_no in 0..seeds {
            cells.push((value.clone(), seed_no, cell_cfg.clone(), (vi * seeds + seed_no) as u64));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot build worker pool: {e}")))?;
    let results: Vec<CliResult<(String, usize, RunRecord)>> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|(value, seed_no, cell_cfg, run_id)| {
                let record = sweep_run(cell_cfg, 10_000 + run_id * 7)?;
                Ok((value.clone(), *seed_no, record))
            })
            .collect()
    });
    let mut csv = String::from(
        "axis,value,seed,source_nmi,source_ari,source_acc,target_nmi,target_ari,target_acc,diff_nmi,diff_ari,diff_acc\n",
    );
    for result in results {
        let (value, seed_no, record) = result?;
        let s = record.source.expect("sweep runs always evaluate");
        let t = record.target.expect("sweep runs always evaluate");
        let d = record.diff.expect("diff follows target");
        csv.push_str(&format!(
            "{axis},{value},{seed_no},{},{},{},{},{},{},{},{},{}\n",
            s.nmi, s.ari, s.acc, t.nmi, t.ari, t.acc, d.nmi, d.ari, d.acc
        ));
    }
    if let Some(parent) = out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(out_csv, csv)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", out_csv.display())))?;
    write_json(&out_csv.with_extension("config.json"), &cfg.echo())?;
    println!("wrote sweep table to {}", out_csv.display());
    Ok(())
}

/// `trace-centroids`: runs one forward pass and dumps the per-block centroid
/// trajectory, plus a 2-D principal-axis projection when the embedding
/// dimension exceeds two.
pub fn cmd_trace_centroids(
    checkpoint_path: &Path,
    data_csv: &Path,
    out_path: &Path,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint_path)?;
    let (features, labels) = load_tabular(data_csv, true)
        .or_else(|_| load_tabular(data_csv, false))?;
    if features.cols() != ckpt.config.input_dim {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} features but the dataset has {}",
            ckpt.config.input_dim,
            features.cols()
        )));
    }
    let (z, trace) = trainer::model_forward(&ckpt.params, &ckpt.config, &features)?;
    let summary = trace.summary();
    let mut document = json!({
        "config": serde_json::to_value(&ckpt.config)
            .map_err(|e| CliError::Runtime(format!("cannot echo config: {e}")))?,
        "blocks": summary.blocks,
    });
    if z.cols() > 2 {
        document["projection"] = project_2d(&z, &trace, labels.as_deref())?;
    }
    write_json(out_path, &document)?;
    println!(
        "wrote trace with {} centroid snapshots to {}",
        trace.states.len(),
        out_path.display()
    );
    Ok(())
}

/// Principal-axis projection of embeddings and per-block centroids for
/// plotting.
fn project_2d(
    z: &Matrix,
    trace: &adaclust::model::StackTrace,
    labels: Option<&[usize]>,
) -> CliResult<serde_json::Value> {
    let mean = z.mean_row();
    let d = z.cols();
    let mut cov = Matrix::zeros(d, d);
    for row in z.row_iter() {
        for a in 0..d {
            for b in 0..d {
                cov.set(a, b, cov.get(a, b) + (row[a] - mean[a]) * (row[b] - mean[b]));
            }
        }
    }
    cov = cov.scale(1.0 / z.rows() as f64);
    let axes = symmetric_top_eigvecs(&cov, 2)?;
    let project = |row: &[f64]| -> [f64; 2] {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        [
            adaclust::linalg::dot(&centered, &axes[0]),
            adaclust::linalg::dot(&centered, &axes[1]),
        ]
    };
    // Subsample points for plotting.
    let step = (z.rows() / 500).max(1);
    let mut samples = Vec::new();
    let mut sample_labels = Vec::new();
    for i in (0..z.rows()).step_by(step) {
        samples.push(project(z.row(i)));
        if let Some(l) = labels {
            sample_labels.push(l[i]);
        }
    }
    let centroids_2d: Vec<Vec<[f64; 2]>> = trace
        .states
        .iter()
        .map(|state| state.centroids.row_iter().map(project).collect())
        .collect();
    Ok(json!({
        "axes": axes,
        "mean": mean,
        "samples": samples,
        "sample_labels": if labels.is_some() { json!(sample_labels) } else { json!(null) },
        "centroids_per_block": centroids_2d,
    }))
}

/// `report`: averages run records per model and prints a compact matrix.
pub fn cmd_report(dir: &Path, out_csv: Option<&Path>) -> CliResult<String> {
    let mut by_model: std::collections::BTreeMap<String, Vec<RunRecord>> = Default::default();
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        match RunRecord::load(&path) {
            Ok(record) => by_model.entry(record.model.clone()).or_default().push(record),
            Err(_) => continue, // not a run record (manifest, config echo, ...)
        }
    }
    if by_model.is_empty() {
        return Err(CliError::Usage(format!(
            "no run records found in {}",
            dir.display()
        )));
    }
    let mean = |values: Vec<Option<MetricsReport>>| -> Option<MetricsReport> {
        let present: Vec<MetricsReport> = values.into_iter().flatten().collect();
        if present.is_empty() {
            return None;
        }
        let n = present.len() as f64;
        Some(MetricsReport {
            nmi: present.iter().map(|m| m.nmi).sum::<f64>() / n,
            ari: present.iter().map(|m| m.ari).sum::<f64>() / n,
            acc: present.iter().map(|m| m.acc).sum::<f64>() / n,
        })
    };
    let mut table = String::new();
    let mut csv = String::from("model,runs,split,nmi,ari,acc\n");
    table.push_str(&format!(
        "{:<12} {:>4}  {:>23}  {:>23}  {:>23}\n",
        "model", "runs", "source NMI/ARI/ACC", "target NMI/ARI/ACC", "diff NMI/ARI/ACC"
    ));
    for (model, records) in &by_model {
        let n = records.len();
        let cells = [
            mean(records.iter().map(|r| r.source).collect()),
            mean(records.iter().map(|r| r.target).collect()),
            mean(records.iter().map(|r| r.diff).collect()),
        ];
        let fmt = |m: &Option<MetricsReport>| match m {
            Some(m) => format!("{:>7.3}/{:>7.3}/{:>7.3}", m.nmi, m.ari, m.acc),
            None => format!("{:>23}", "-"),
        };
        table.push_str(&format!(
            "{model:<12} {n:>4}  {}  {}  {}\n",
            fmt(&cells[0]),
            fmt(&cells[1]),
            fmt(&cells[2])
        ));
        for (split, cell) in ["source", "target", "diff"].iter().zip(&cells) {
            if let Some(m) = cell {
                csv.push_str(&format!("{model},{n},{split},{},{},{}\n", m.nmi, m.ari, m.acc));
            }
        }
    }
    if let Some(path) = out_csv {
        fs::write(path, &csv)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    print!("{table}");
    Ok(table)
}
