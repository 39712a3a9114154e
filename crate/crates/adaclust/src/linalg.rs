//! Dense real linear algebra, activations, softmax, and small structured-matrix
//! utilities shared by every other module.
//!
//! Everything here is plain `f64` with value semantics; the differentiable
//! counterparts live in [`crate::graph`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, checking length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape {
                context: "Matrix::from_vec",
                detail: format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            });
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape {
                context: "Matrix::from_vec",
                detail: format!("non-finite entry at flat index {bad}"),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape {
                context: "Matrix::from_rows",
                detail: "ragged rows".to_string(),
            });
        }
        Self::from_vec(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    /// Returns a new matrix containing the given rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: indices.len(), cols: self.cols, data }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape {
                context: "Matrix::matmul",
                detail: format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let lhs = self.get(i, k);
                if lhs == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += lhs * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`; pairs rows of `self` with rows of `other`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape {
                context: "Matrix::matmul_transposed",
                detail: format!(
                    "{}x{} * ({}x{})^T",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let mut out = Self::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(self.row(i), other.row(j));
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::Shape {
                context: "Matrix::matvec",
                detail: format!("{}x{} * vector of length {}", self.rows, self.cols, x.len()),
            });
        }
        Ok(self.row_iter().map(|row| dot(row, x)).collect())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "Matrix::sub", |a, b| a - b)
    }

    fn zip_with(&self, other: &Matrix, context: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape {
                context,
                detail: format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Column means, i.e. the mean row.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for row in self.row_iter() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let scale = 1.0 / self.rows as f64;
        mean.iter_mut().for_each(|m| *m *= scale);
        mean
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Continuous non-decreasing activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind {
    Identity,
    ReLU,
    LeakyReLU { slope: f64 },
}

impl ActivationKind {
    /// Leaky variant with a validated slope in (0, 1).
    pub fn leaky_relu(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::InvalidParameter {
                name: "slope",
                detail: format!("must lie in (0, 1), got {slope}"),
            });
        }
        Ok(ActivationKind::LeakyReLU { slope })
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => x,
            ActivationKind::ReLU => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyReLU { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }

    /// Derivative with the kink convention fixed at x == 0: ReLU yields 0,
    /// LeakyReLU yields its slope.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Identity => 1.0,
            ActivationKind::ReLU => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyReLU { slope } => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// Applies an activation to a scalar.
pub fn apply_activation(kind: ActivationKind, x: f64) -> f64 {
    kind.apply(x)
}

/// Row-wise temperature softmax with per-row max subtraction.
///
/// Each output row is non-negative and sums to one.
pub fn softmax_rows(scores: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            detail: format!("temperature must be positive, got {tau}"),
        });
    }
    if !scores.is_finite() {
        return Err(Error::InvalidParameter {
            name: "scores",
            detail: "softmax input must be finite".to_string(),
        });
    }
    let mut out = Matrix::zeros(scores.rows(), scores.cols());
    for i in 0..scores.rows() {
        let row = scores.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for j in 0..row.len() {
            let e = ((row[j] - max) / tau).exp();
            out.set(i, j, e);
            sum += e;
        }
        for j in 0..row.len() {
            out.set(i, j, out.get(i, j) / sum);
        }
    }
    Ok(out)
}

/// Returns `(raw + raw^T) / 2`; the result is exactly symmetric.
pub fn symmetrize(raw: &Matrix) -> Result<Matrix> {
    if raw.rows() != raw.cols() {
        return Err(Error::Shape {
            context: "symmetrize",
            detail: format!("expected square matrix, got {}x{}", raw.rows(), raw.cols()),
        });
    }
    let n = raw.rows();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, (raw.get(i, j) + raw.get(j, i)) / 2.0);
        }
    }
    Ok(out)
}

/// Draws `k` mutually orthonormal rows in `b` dimensions, deterministically
/// for a given seed (Gram-Schmidt over seeded Gaussian draws).
pub fn random_orthonormal_rows(k: usize, b: usize, seed: u64) -> Result<Matrix> {
    if k > b {
        return Err(Error::Dimension {
            detail: format!("cannot build {k} orthonormal rows in {b} dimensions (K = {k} > b = {b})"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let mut candidate: Vec<f64> = (0..b).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Two Gram-Schmidt passes keep the Gram matrix within ~1e-15 of I.
        for _ in 0..2 {
            for prev in &rows {
                let proj = dot(&candidate, prev);
                for (c, p) in candidate.iter_mut().zip(prev) {
                    *c -= proj * p;
                }
            }
        }
        let norm = dot(&candidate, &candidate).sqrt();
        if norm < 1e-8 {
            continue; // near-dependent draw; try again
        }
        candidate.iter_mut().for_each(|c| *c /= norm);
        rows.push(candidate);
    }
    Matrix::from_rows(&rows)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if a.rows() != a.cols() {
        return Err(Error::Shape {
            context: "cholesky",
            detail: format!("expected square matrix, got {}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::Numerical {
                        detail: format!("matrix is not positive-definite (pivot {i} = {sum:e})"),
                        iteration: None,
                    });
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `A x = rhs` given the Cholesky factor `L` of `A`.
pub fn cholesky_solve(l: &Matrix, rhs: &[f64]) -> Vec<f64> {
    let n = l.rows();
    debug_assert_eq!(rhs.len(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut sum = rhs[i];
        for k in 0..i {
            sum -= l.get(i, k) * y[k];
        }
        y[i] = sum / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l.get(k, i) * x[k];
        }
        x[i] = sum / l.get(i, i);
    }
    x
}

/// `log det A` from the Cholesky factor of `A`.
pub fn cholesky_log_det(l: &Matrix) -> f64 {
    (0..l.rows()).map(|i| l.get(i, i).ln()).sum::<f64>() * 2.0
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    let l = cholesky(a)?;
    let n = a.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    Ok(inv)
}

/// Leading eigenvectors of a symmetric positive-semidefinite matrix by power
/// iteration with deflation. Used for 2-D projections of traces.
pub fn symmetric_top_eigvecs(a: &Matrix, count: usize) -> Result<Vec<Vec<f64>>> {
    if a.rows() != a.cols() {
        return Err(Error::Shape {
            context: "symmetric_top_eigvecs",
            detail: format!("expected square matrix, got {}x{}", a.rows(), a.cols()),
        });
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut vecs = Vec::with_capacity(count.min(n));
    for axis in 0..count.min(n) {
        let mut v = vec![0.0; n];
        v[axis % n] = 1.0;
        v[(axis + 1) % n] = 0.5;
        let mut eigenvalue = 0.0;
        for _ in 0..500 {
            let w = work.matvec(&v)?;
            let norm = dot(&w, &w).sqrt();
            if norm < 1e-14 {
                break;
            }
            v = w.iter().map(|x| x / norm).collect();
            eigenvalue = norm;
        }
        // Deflate: work -= lambda v v^T
        for i in 0..n {
            for j in 0..n {
                let val = work.get(i, j) - eigenvalue * v[i] * v[j];
                work.set(i, j, val);
            }
        }
        vecs.push(v);
    }
    Ok(vecs)
}
