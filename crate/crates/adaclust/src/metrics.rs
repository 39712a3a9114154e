//! External cluster-evaluation metrics: normalized mutual information,
//! adjusted Rand index, and accuracy under the best label bijection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Joint label counts; `counts[i][j]` is the number of samples with predicted
/// label `i` and true label `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    total: usize,
}

impl ContingencyTable {
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape {
                context: "ContingencyTable::from_counts",
                detail: "ragged rows".to_string(),
            });
        }
        let total = counts.iter().flatten().sum();
        Ok(ContingencyTable { counts, total })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn pred_marginals(&self) -> Vec<usize> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn true_marginals(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.counts.iter().map(|row| row[j]).sum()).collect()
    }
}

/// Builds the contingency table of two label vectors.
pub fn contingency(pred: &[usize], truth: &[usize]) -> Result<ContingencyTable> {
    if pred.len() != truth.len() {
        return Err(Error::Shape {
            context: "contingency",
            detail: format!("{} predicted labels vs {} true labels", pred.len(), truth.len()),
        });
    }
    let k_pred = pred.iter().max().map_or(0, |m| m + 1);
    let k_true = truth.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; k_true]; k_pred];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p][t] += 1;
    }
    ContingencyTable::from_counts(counts)
}

fn entropy_of(marginals: &[usize], total: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(pred; true) / sqrt(H(pred) H(true))`.
///
/// Defined as 1 when both entropies vanish (both partitions trivial) and 0
/// when exactly one does.
pub fn nmi(table: &ContingencyTable) -> f64 {
    let total = table.total() as f64;
    let pred_m = table.pred_marginals();
    let true_m = table.true_marginals();
    let h_pred = entropy_of(&pred_m, total);
    let h_true = entropy_of(&true_m, total);
    if h_pred == 0.0 && h_true == 0.0 {
        return 1.0;
    }
    if h_pred == 0.0 || h_true == 0.0 {
        return 0.0;
    }
    let mut mutual = 0.0;
    for (i, row) in table.counts().iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let joint = c as f64 / total;
            mutual += joint * (total * c as f64 / (pred_m[i] as f64 * true_m[j] as f64)).ln();
        }
    }
    (mutual / (h_pred * h_true).sqrt()).clamp(0.0, 1.0)
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index via the pair-count formula,
/// `(Index - Expected) / (Max - Expected)`.
pub fn ari(table: &ContingencyTable) -> f64 {
    let index: f64 = table.counts().iter().flatten().map(|&c| choose2(c)).sum();
    let sum_pred: f64 = table.pred_marginals().iter().map(|&c| choose2(c)).sum();
    let sum_true: f64 = table.true_marginals().iter().map(|&c| choose2(c)).sum();
    let pairs = choose2(table.total());
    if pairs == 0.0 {
        return 1.0;
    }
    let expected = sum_pred * sum_true / pairs;
    let max = (sum_pred + sum_true) / 2.0;
    if (max - expected).abs() < 1e-12 {
        // Both partitions trivial in the same way; they are identical.
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Minimum-cost assignment (Kuhn-Munkres with potentials, O(n^3)).
///
/// Rectangular inputs are padded to square with zero-cost cells; rows matched
/// to a padding column report `None`.
pub fn hungarian(cost: &Matrix) -> Vec<Option<usize>> {
    let rows = cost.rows();
    let cols = cost.cols();
    let n = rows.max(cols);
    let at = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            cost.get(i, j)
        } else {
            0.0
        }
    };
    // 1-indexed potentials over the padded square matrix.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column -> row (0 = free)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_slack[j] {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![None; rows];
    for j in 1..=n {
        let i = matched_row[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            assignment[i - 1] = Some(j - 1);
        }
    }
    assignment
}

/// Clustering accuracy: the best fraction of agreeing labels over all
/// injections of predicted labels into true labels.
pub fn acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = contingency(pred, truth)?;
    let k_pred = table.counts().len();
    let k_true = table.counts().first().map_or(0, Vec::len);
    if k_pred > 64 || k_true > 64 {
        return Err(Error::Config(format!(
            "accuracy matching supports at most 64 labels, got {k_pred} predicted / {k_true} true"
        )));
    }
    if table.total() == 0 {
        return Ok(1.0);
    }
    // Maximize matched counts: minimize negated counts.
    let cost = Matrix::from_vec(
        k_pred,
        k_true,
        table.counts().iter().flatten().map(|&c| -(c as f64)).collect(),
    )?;
    let assignment = hungarian(&cost);
    let matched: usize = assignment
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| table.counts()[i][j]))
        .sum();
    Ok(matched as f64 / table.total() as f64)
}

/// The three external metrics for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
}

impl MetricsReport {
    pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Self> {
        let table = contingency(pred, truth)?;
        Ok(MetricsReport { nmi: nmi(&table), ari: ari(&table), acc: acc(pred, truth)? })
    }

    /// Componentwise difference, `self - other`.
    pub fn diff(&self, other: &MetricsReport) -> MetricsReport {
        MetricsReport {
            nmi: self.nmi - other.nmi,
            ari: self.ari - other.ari,
            acc: self.acc - other.acc,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.nmi.is_finite() && self.ari.is_finite() && self.acc.is_finite()
    }
}

#[cfg(any(test, feature = "testing"))]
pub mod oracles {
    //! Independent reference implementations used only to check the fast
    //! paths; kept deliberately naive.

    /// Mutual information and entropies straight from their definitions.
    pub fn nmi_direct(pred: &[usize], truth: &[usize]) -> f64 {
        let n = pred.len() as f64;
        let k_pred = pred.iter().max().unwrap() + 1;
        let k_true = truth.iter().max().unwrap() + 1;
        let mut joint_counts = vec![vec![0usize; k_true]; k_pred];
        for (&p, &t) in pred.iter().zip(truth) {
            joint_counts[p][t] += 1;
        }
        // Divide once so degenerate distributions stay exactly 0 or 1.
        let joint: Vec<Vec<f64>> = joint_counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n).collect())
            .collect();
        let p_pred: Vec<f64> = (0..k_pred).map(|i| joint[i].iter().sum()).collect();
        let p_true: Vec<f64> =
            (0..k_true).map(|j| (0..k_pred).map(|i| joint[i][j]).sum()).collect();
        let mut mi = 0.0;
        for i in 0..k_pred {
            for j in 0..k_true {
                if joint[i][j] > 0.0 {
                    mi += joint[i][j] * (joint[i][j] / (p_pred[i] * p_true[j])).ln();
                }
            }
        }
        let h = |p: &[f64]| -> f64 { p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum() };
        let (hp, ht) = (h(&p_pred), h(&p_true));
        if hp == 0.0 && ht == 0.0 {
            1.0
        } else if hp == 0.0 || ht == 0.0 {
            0.0
        } else {
            mi / (hp * ht).sqrt()
        }
    }

    /// ARI by classifying every sample pair as agreeing or not.
    pub fn ari_pairwise(pred: &[usize], truth: &[usize]) -> f64 {
        let n = pred.len();
        let (mut both, mut pred_only, mut true_only, mut neither) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in i + 1..n {
                let same_pred = pred[i] == pred[j];
                let same_true = truth[i] == truth[j];
                match (same_pred, same_true) {
                    (true, true) => both += 1.0,
                    (true, false) => pred_only += 1.0,
                    (false, true) => true_only += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let numerator = 2.0 * (both * neither - pred_only * true_only);
        let denominator = (both + pred_only) * (pred_only + neither)
            + (both + true_only) * (true_only + neither);
        if denominator == 0.0 {
            1.0
        } else {
            numerator / denominator
        }
    }

    /// Accuracy by exhaustive search over label bijections (K <= 8).
    pub fn acc_brute_force(pred: &[usize], truth: &[usize]) -> f64 {
        let k_pred = pred.iter().max().unwrap() + 1;
        let k_true = truth.iter().max().unwrap() + 1;
        let k = k_pred.max(k_true);
        assert!(k <= 8, "brute force is factorial");
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let matched = pred.iter().zip(truth).filter(|&(&a, &b)| p[a] == b).count();
            best = best.max(matched);
        });
        best as f64 / pred.len() as f64
    }

    /// Minimum assignment cost by exhaustive permutation search (square).
    pub fn assignment_brute_force(cost: &crate::linalg::Matrix) -> f64 {
        let n = cost.rows();
        assert_eq!(n, cost.cols());
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let total: f64 = (0..n).map(|i| cost.get(i, p[i])).sum();
            if total < best {
                best = total;
            }
        });
        best
    }

    fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == items.len() {
            visit(items);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, visit);
            items.swap(start, i);
        }
    }
}
