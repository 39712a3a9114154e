//! Classical clustering baselines: Lloyd's k-means, a single soft k-means
//! step, and EM for a uniform-weight Gaussian mixture with one shared
//! covariance. These double as equivalence oracles for the block stack's
//! special cases, and as the frozen-centroid transfer baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, cholesky, cholesky_log_det, cholesky_solve, softmax_rows, squared_distance, Matrix,
};
use crate::model::AssignmentMatrix;

/// Output of Lloyd's algorithm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn nearest_centroid(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_dist = f64::INFINITY;
    for (j, c) in centroids.row_iter().enumerate() {
        let d = squared_distance(row, c);
        if d < best_dist {
            best_dist = d;
            best = j;
        }
    }
    (best, best_dist)
}

/// Seeded k-means++ initialization: the first center is a uniform draw, each
/// further center is drawn with probability proportional to its squared
/// distance from the nearest chosen center.
pub fn kmeans_plus_plus_init(z: &Matrix, k: usize, seed: u64) -> Result<Matrix> {
    use rand::{Rng, SeedableRng};
    if k == 0 || k > z.rows() {
        return Err(Error::Config(format!(
            "cannot choose {k} initial centers from {} samples",
            z.rows()
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = vec![rng.random_range(0..z.rows())];
    let mut dist_sq: Vec<f64> = z
        .row_iter()
        .map(|row| squared_distance(row, z.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a center; fall back to a
            // uniform draw.
            rng.random_range(0..z.rows())
        } else {
            let mut threshold = rng.random_range(0.0..total);
            let mut pick = z.rows() - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                if threshold < d {
                    pick = i;
                    break;
                }
                threshold -= d;
            }
            pick
        };
        chosen.push(next);
        for (i, d) in dist_sq.iter_mut().enumerate() {
            *d = d.min(squared_distance(z.row(i), z.row(next)));
        }
    }
    Ok(z.select_rows(&chosen))
}

/// Lloyd's k-means from an explicit initialization. Ties go to the lowest
/// index; clusters that lose all members keep their previous centroid.
pub fn kmeans_lloyd(
    z: &Matrix,
    k: usize,
    init: &Matrix,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansResult> {
    if k > z.rows() {
        return Err(Error::Config(format!(
            "cannot form {k} clusters from {} samples",
            z.rows()
        )));
    }
    if init.rows() != k || init.cols() != z.cols() {
        return Err(Error::Config(format!(
            "initialization is {}x{} but k-means needs {k}x{}",
            init.rows(),
            init.cols(),
            z.cols()
        )));
    }
    let mut centroids = init.clone();
    let mut labels = vec![0usize; z.rows()];
    let mut iterations = 0usize;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        for (i, row) in z.row_iter().enumerate() {
            labels[i] = nearest_centroid(row, &centroids).0;
        }
        let mut sums = Matrix::zeros(k, z.cols());
        let mut counts = vec![0usize; k];
        for (i, row) in z.row_iter().enumerate() {
            counts[labels[i]] += 1;
            for (c, v) in row.iter().enumerate() {
                sums.set(labels[i], c, sums.get(labels[i], c) + v);
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue; // keep previous centroid
            }
            for c in 0..z.cols() {
                let new = sums.get(j, c) / counts[j] as f64;
                shift = shift.max((new - centroids.get(j, c)).abs());
                centroids.set(j, c, new);
            }
        }
        if shift < tol {
            break;
        }
    }
    // Final assignment against the converged centroids.
    let mut inertia = 0.0;
    for (i, row) in z.row_iter().enumerate() {
        let (j, d) = nearest_centroid(row, &centroids);
        labels[i] = j;
        inertia += d;
    }
    Ok(KMeansResult { centroids, labels, inertia, iterations })
}

/// One soft k-means step: responsibilities from squared Euclidean distances
/// at temperature `tau`, then the weighted mean update.
pub fn soft_kmeans_step(
    z: &Matrix,
    centroids: &Matrix,
    tau: f64,
) -> Result<(AssignmentMatrix, Matrix)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            detail: format!("temperature must be positive, got {tau}"),
        });
    }
    let k = centroids.rows();
    let neg_inv_tau = -1.0 / tau;
    let mut scores = Matrix::zeros(z.rows(), k);
    for (i, row) in z.row_iter().enumerate() {
        for (j, c) in centroids.row_iter().enumerate() {
            scores.set(i, j, squared_distance(row, c) * neg_inv_tau);
        }
    }
    let delta = AssignmentMatrix::new(softmax_rows(&scores, 1.0)?)?;
    let mut updated = Matrix::zeros(k, z.cols());
    for j in 0..k {
        let mut mass = 0.0;
        for i in 0..z.rows() {
            mass += delta.probs().get(i, j);
        }
        if mass < 1e-12 {
            for c in 0..z.cols() {
                updated.set(j, c, centroids.get(j, c));
            }
            continue;
        }
        for c in 0..z.cols() {
            let mut num = 0.0;
            for i in 0..z.rows() {
                num += delta.probs().get(i, j) * z.get(i, c);
            }
            updated.set(j, c, num / mass);
        }
    }
    Ok((delta, updated))
}

/// Fitted uniform-weight, shared-covariance Gaussian mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmResult {
    pub means: Matrix,
    pub shared_covariance: Matrix,
    pub weights: Vec<f64>,
    pub responsibilities: Matrix,
    pub log_likelihood: f64,
    pub iterations: usize,
}

/// E-step responsibilities and per-sample log-likelihood contributions for a
/// uniform-weight mixture with shared covariance.
fn gmm_e_step(z: &Matrix, means: &Matrix, cov_factor: &Matrix, log_det: f64) -> (Matrix, f64) {
    let k = means.rows();
    let d = z.cols() as f64;
    let mut log_resp = Matrix::zeros(z.rows(), k);
    let const_term = -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det) - (k as f64).ln();
    let mut log_likelihood = 0.0;
    for (i, row) in z.row_iter().enumerate() {
        for (j, mean) in means.row_iter().enumerate() {
            let diff: Vec<f64> = row.iter().zip(mean).map(|(a, b)| a - b).collect();
            let solved = cholesky_solve(cov_factor, &diff);
            let maha: f64 = linalg::dot(&diff, &solved);
            log_resp.set(i, j, const_term - 0.5 * maha);
        }
        // log-sum-exp over components
        let row_vals = log_resp.row(i);
        let max = row_vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum_exp: f64 = row_vals.iter().map(|v| (v - max).exp()).sum();
        log_likelihood += max + sum_exp.ln();
    }
    let responsibilities = softmax_rows(&log_resp, 1.0).expect("finite log responsibilities");
    (responsibilities, log_likelihood)
}

/// One E-step of the uniform-weight, shared-covariance mixture: the
/// responsibilities of `z` under the given means and covariance, plus the
/// total log-likelihood.
pub fn gmm_responsibilities(
    z: &Matrix,
    means: &Matrix,
    shared_covariance: &Matrix,
) -> Result<(Matrix, f64)> {
    let factor = cholesky(shared_covariance).map_err(|_| Error::Numerical {
        detail: "shared covariance is not positive-definite".to_string(),
        iteration: None,
    })?;
    let log_det = cholesky_log_det(&factor);
    Ok(gmm_e_step(z, means, &factor, log_det))
}

/// EM for a Gaussian mixture with uniform (fixed) weights and one shared
/// covariance. With `reestimate_covariance` off, the covariance stays at its
/// initial value and only the means move; that is the oracle configuration
/// for the block-stack equivalence.
pub fn gmm_em_shared(
    z: &Matrix,
    k: usize,
    init_means: &Matrix,
    shared_cov_init: &Matrix,
    max_iter: usize,
    tol: f64,
    reestimate_covariance: bool,
) -> Result<GmmResult> {
    if k > z.rows() {
        return Err(Error::Config(format!(
            "cannot fit {k} components to {} samples",
            z.rows()
        )));
    }
    if init_means.rows() != k || init_means.cols() != z.cols() {
        return Err(Error::Config(format!(
            "initial means are {}x{} but the mixture needs {k}x{}",
            init_means.rows(),
            init_means.cols(),
            z.cols()
        )));
    }
    let mut means = init_means.clone();
    let mut covariance = crate::linalg::symmetrize(shared_cov_init)?;
    let mut factor = cholesky(&covariance).map_err(|_| Error::Numerical {
        detail: "initial shared covariance is not positive-definite".to_string(),
        iteration: Some(0),
    })?;
    let mut log_det = cholesky_log_det(&factor);
    let mut iterations = 0usize;
    for it in 0..max_iter.max(1) {
        iterations = it + 1;
        let (responsibilities, _) = gmm_e_step(z, &means, &factor, log_det);

        // M-step: means (uniform weights stay fixed).
        let mut shift: f64 = 0.0;
        let mut new_means = Matrix::zeros(k, z.cols());
        for j in 0..k {
            let mut mass = 0.0;
            for i in 0..z.rows() {
                mass += responsibilities.get(i, j);
            }
            if mass < 1e-12 {
                for c in 0..z.cols() {
                    new_means.set(j, c, means.get(j, c));
                }
                continue;
            }
            for c in 0..z.cols() {
                let mut num = 0.0;
                for i in 0..z.rows() {
                    num += responsibilities.get(i, j) * z.get(i, c);
                }
                new_means.set(j, c, num / mass);
            }
        }
        for j in 0..k {
            for c in 0..z.cols() {
                shift = shift.max((new_means.get(j, c) - means.get(j, c)).abs());
            }
        }
        means = new_means;

        if reestimate_covariance {
            let d = z.cols();
            let mut pooled = Matrix::zeros(d, d);
            for (i, row) in z.row_iter().enumerate() {
                for j in 0..k {
                    let r = responsibilities.get(i, j);
                    let mean = means.row(j);
                    for a in 0..d {
                        let da = row[a] - mean[a];
                        for b in 0..d {
                            let db = row[b] - mean[b];
                            pooled.set(a, b, pooled.get(a, b) + r * da * db);
                        }
                    }
                }
            }
            covariance = pooled.scale(1.0 / z.rows() as f64);
            factor = cholesky(&covariance).map_err(|e| Error::Numerical {
                detail: format!("shared covariance lost positive-definiteness: {e}"),
                iteration: Some(it + 1),
            })?;
            log_det = cholesky_log_det(&factor);
        }

        if shift < tol {
            break;
        }
    }
    // Responsibilities and likelihood against the final parameters.
    let (responsibilities, log_likelihood) = gmm_e_step(z, &means, &factor, log_det);
    Ok(GmmResult {
        means,
        shared_covariance: covariance,
        weights: vec![1.0 / k as f64; k],
        responsibilities,
        log_likelihood,
        iterations,
    })
}

/// A trained source model whose centroids are then frozen for transfer.
pub enum SourceModel<'a> {
    KMeans(&'a KMeansResult),
    Gmm(&'a GmmResult),
    SoftKMeans { centroids: &'a Matrix, tau: f64 },
}

/// The frozen-centroid transfer protocol: assigns target samples to the
/// source model's fixed centroids with no adaptation.
pub fn transfer_eval_fixed_centroids(model: &SourceModel, target_z: &Matrix) -> Result<Vec<usize>> {
    match model {
        SourceModel::KMeans(result) => Ok(target_z
            .row_iter()
            .map(|row| nearest_centroid(row, &result.centroids).0)
            .collect()),
        SourceModel::Gmm(result) => {
            let factor = cholesky(&result.shared_covariance).map_err(|_| Error::Numerical {
                detail: "stored shared covariance is not positive-definite".to_string(),
                iteration: None,
            })?;
            let log_det = cholesky_log_det(&factor);
            let (resp, _) = gmm_e_step(target_z, &result.means, &factor, log_det);
            Ok(AssignmentMatrix::new(resp)?.labels())
        }
        SourceModel::SoftKMeans { centroids, tau } => {
            let (delta, _) = soft_kmeans_step(target_z, centroids, *tau)?;
            Ok(delta.labels())
        }
    }
}
