//! Synthetic source/target domain pairs with controlled distribution shift,
//! plus the CSV/JSON interchange formats and the batch iterator.
//!
//! A source domain draws one Gaussian blob per cluster with a random center
//! and a random (positive-definite) covariance. The matching target domain
//! keeps every covariance but shifts each center by a Gaussian offset whose
//! scale is expressed relative to the mean pairwise center distance, then
//! draws fresh samples. Drift is therefore a pure center shift.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, Matrix};

/// Generation parameters for one synthetic domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub num_clusters: usize,
    pub dim: usize,
    pub n_per_cluster: usize,
    /// Centers are drawn uniformly from `[-center_box, center_box]^dim`.
    pub center_box: f64,
    /// Overall covariance magnitude.
    pub cov_scale: f64,
    pub seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 2 {
            return Err(Error::Config(format!(
                "need at least 2 clusters, got {}",
                self.num_clusters
            )));
        }
        if self.n_per_cluster == 0 {
            return Err(Error::Config("n_per_cluster must be at least 1".to_string()));
        }
        if !(self.cov_scale > 0.0) {
            return Err(Error::Config(format!("cov_scale must be positive, got {}", self.cov_scale)));
        }
        if !(self.center_box > 0.0) {
            return Err(Error::Config(format!(
                "center_box must be positive, got {}",
                self.center_box
            )));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.num_clusters * self.n_per_cluster
    }
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            num_clusters: 3,
            dim: 16,
            n_per_cluster: 500,
            center_box: 5.0,
            cov_scale: 1.0,
            seed: 0,
        }
    }
}

/// One generated domain: features, labels, and the generating parameters.
#[derive(Debug, Clone)]
pub struct Domain {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub centers: Matrix,
    pub covariances: Vec<Matrix>,
}

/// A source domain and its drifted target.
#[derive(Debug, Clone)]
pub struct DomainPair {
    pub source: Domain,
    pub target: Domain,
    pub perturbation_scale: f64,
    pub spec: DomainSpec,
    pub target_seed: u64,
}

fn sample_gaussian_rows(
    rng: &mut ChaCha8Rng,
    count: usize,
    center: &[f64],
    cov_factor: &Matrix,
) -> Vec<Vec<f64>> {
    let dim = center.len();
    (0..count)
        .map(|_| {
            let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let correlated = cov_factor.matvec(&noise).expect("factor is dim x dim");
            center.iter().zip(correlated).map(|(c, n)| c + n).collect()
        })
        .collect()
}

/// Draws a source domain: per cluster, a uniform center, a random SPD
/// covariance `A A^T cov_scale / d + 0.05 I`, and `n_per_cluster` samples.
/// Deterministic for a given spec.
pub fn gen_source(spec: &DomainSpec) -> Result<Domain> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let mut centers = Matrix::zeros(spec.num_clusters, d);
    for j in 0..spec.num_clusters {
        for c in 0..d {
            centers.set(j, c, rng.random_range(-spec.center_box..spec.center_box));
        }
    }
    let mut covariances = Vec::with_capacity(spec.num_clusters);
    for _ in 0..spec.num_clusters {
        let a_data: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = Matrix::from_vec(d, d, a_data)?;
        let mut cov = a.matmul_transposed(&a)?.scale(spec.cov_scale / d as f64);
        for i in 0..d {
            cov.set(i, i, cov.get(i, i) + 0.05);
        }
        covariances.push(cov);
    }
    let mut rows = Vec::with_capacity(spec.num_samples());
    let mut labels = Vec::with_capacity(spec.num_samples());
    for j in 0..spec.num_clusters {
        let factor = cholesky(&covariances[j])?;
        rows.extend(sample_gaussian_rows(&mut rng, spec.n_per_cluster, centers.row(j), &factor));
        labels.extend(std::iter::repeat_n(j, spec.n_per_cluster));
    }
    Ok(Domain { features: Matrix::from_rows(&rows)?, labels, centers, covariances })
}

/// Mean pairwise Euclidean distance between rows.
pub fn mean_pairwise_distance(centers: &Matrix) -> f64 {
    let k = centers.rows();
    if k < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..k {
        for j in i + 1..k {
            sum += crate::linalg::squared_distance(centers.row(i), centers.row(j)).sqrt();
            count += 1;
        }
    }
    sum / count as f64
}

/// Shifts every source center by a Gaussian offset with per-coordinate
/// standard deviation `perturbation_scale * mean_pairwise_distance`, keeps
/// the covariances, and draws fresh samples.
pub fn perturb_to_target(source: &Domain, perturbation_scale: f64, seed: u64) -> Result<Domain> {
    if perturbation_scale < 0.0 {
        return Err(Error::InvalidParameter {
            name: "perturbation_scale",
            detail: format!("must be non-negative, got {perturbation_scale}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = source.centers.rows();
    let d = source.centers.cols();
    let offset_std = perturbation_scale * mean_pairwise_distance(&source.centers);
    let mut centers = Matrix::zeros(k, d);
    for j in 0..k {
        for c in 0..d {
            let offset: f64 = StandardNormal.sample(&mut rng);
            centers.set(j, c, source.centers.get(j, c) + offset_std * offset);
        }
    }
    let n_per_cluster = source.labels.len() / k;
    let mut rows = Vec::with_capacity(source.labels.len());
    let mut labels = Vec::with_capacity(source.labels.len());
    for j in 0..k {
        let factor = cholesky(&source.covariances[j])?;
        rows.extend(sample_gaussian_rows(&mut rng, n_per_cluster, centers.row(j), &factor));
        labels.extend(std::iter::repeat_n(j, n_per_cluster));
    }
    Ok(Domain {
        features: Matrix::from_rows(&rows)?,
        labels,
        centers,
        covariances: source.covariances.clone(),
    })
}

/// Generates a source domain and its drifted target in one call.
pub fn make_pair(spec: &DomainSpec, perturbation_scale: f64, target_seed: u64) -> Result<DomainPair> {
    let source = gen_source(spec)?;
    let target = perturb_to_target(&source, perturbation_scale, target_seed)?;
    Ok(DomainPair {
        source,
        target,
        perturbation_scale,
        spec: spec.clone(),
        target_seed,
    })
}

/// Writes features (and optionally labels) as CSV with a `f0..f{d-1}[,label]`
/// header. Values use the shortest decimal form that round-trips exactly.
pub fn save_tabular(path: &Path, features: &Matrix, labels: Option<&[usize]>) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != features.rows() {
            return Err(Error::Shape {
                context: "save_tabular",
                detail: format!("{} labels for {} rows", l.len(), features.rows()),
            });
        }
    }
    let mut out = String::new();
    let header: Vec<String> = (0..features.cols()).map(|j| format!("f{j}")).collect();
    out.push_str(&header.join(","));
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in features.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a CSV written by [`save_tabular`]. With `has_labels`, the final
/// `label` column is required.
pub fn load_tabular(path: &Path, has_labels: bool) -> Result<(Matrix, Option<Vec<usize>>)> {
    let content = fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        detail: "empty file".to_string(),
    })?;
    let columns: Vec<&str> = header.split(',').collect();
    let feature_count = if has_labels { columns.len().saturating_sub(1) } else { columns.len() };
    if feature_count == 0 {
        return Err(Error::Parse { line: 1, detail: "no feature columns".to_string() });
    }
    for (j, name) in columns.iter().take(feature_count).enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::Parse {
                line: 1,
                detail: format!("expected column `f{j}`, found `{name}`"),
            });
        }
    }
    if has_labels && columns.last() != Some(&"label") {
        return Err(Error::Parse {
            line: 1,
            detail: "expected final column `label`".to_string(),
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                line: line_no,
                detail: format!("expected {} fields, found {}", columns.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_count);
        for field in &fields[..feature_count] {
            row.push(field.parse::<f64>().map_err(|e| Error::Parse {
                line: line_no,
                detail: format!("bad feature value `{field}`: {e}"),
            })?);
        }
        if has_labels {
            let field = fields[feature_count];
            labels.push(field.parse::<usize>().map_err(|e| Error::Parse {
                line: line_no,
                detail: format!("bad label `{field}`: {e}"),
            })?);
        }
        rows.push(row);
    }
    let features = Matrix::from_rows(&rows)?;
    Ok((features, has_labels.then_some(labels)))
}

/// Metadata sidecar written next to each dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMeta {
    pub schema_version: u32,
    /// "source" or "target".
    pub role: String,
    pub spec: DomainSpec,
    pub perturbation_scale: f64,
    pub target_seed: Option<u64>,
    pub centers: Vec<Vec<f64>>,
}

pub const META_SCHEMA_VERSION: u32 = 1;

/// Writes `<stem>_source.csv`, `<stem>_source.meta.json`, `<stem>_target.csv`
/// and `<stem>_target.meta.json` into `dir`.
pub fn save_domain_pair(dir: &Path, stem: &str, pair: &DomainPair) -> Result<()> {
    fs::create_dir_all(dir)?;
    let centers_of = |m: &Matrix| m.row_iter().map(|r| r.to_vec()).collect::<Vec<_>>();
    for (role, domain, target_seed) in [
        ("source", &pair.source, None),
        ("target", &pair.target, Some(pair.target_seed)),
    ] {
        let csv = dir.join(format!("{stem}_{role}.csv"));
        save_tabular(&csv, &domain.features, Some(&domain.labels))?;
        let meta = DomainMeta {
            schema_version: META_SCHEMA_VERSION,
            role: role.to_string(),
            spec: pair.spec.clone(),
            perturbation_scale: pair.perturbation_scale,
            target_seed,
            centers: centers_of(&domain.centers),
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::Persistence(format!("cannot serialize metadata: {e}")))?;
        fs::write(dir.join(format!("{stem}_{role}.meta.json")), json)?;
    }
    Ok(())
}

/// Reads a sidecar written by [`save_domain_pair`].
pub fn load_meta(path: &Path) -> Result<DomainMeta> {
    let content = fs::read_to_string(path)?;
    let meta: DomainMeta = serde_json::from_str(&content)
        .map_err(|e| Error::Persistence(format!("cannot parse metadata {}: {e}", path.display())))?;
    if meta.schema_version != META_SCHEMA_VERSION {
        return Err(Error::Persistence(format!(
            "metadata schema version {} is not supported (expected {})",
            meta.schema_version, META_SCHEMA_VERSION
        )));
    }
    Ok(meta)
}

/// Seeded shuffled index batches; every index appears exactly once per epoch
/// and the last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, shuffle_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter {
            name: "batch_size",
            detail: "must be at least 1".to_string(),
        });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    Ok(indices.chunks(batch_size).map(|c| c.to_vec()).collect())
}
