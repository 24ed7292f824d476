//! Batch-mean losses over logits, each returning the exact gradient of the
//! mean with respect to the logits.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Label-smoothing mass in `[0, 1)`.
    pub smoothing: f64,
    /// Optional class → cluster map; targets are remapped through it.
    #[serde(default)]
    pub level_map: Option<Vec<usize>>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            smoothing: 0.1,
            level_map: None,
        }
    }
}

impl LossConfig {
    /// Smoothed cross-entropy against labels remapped through `level_map`.
    pub fn loss(&self, logits: &DenseMatrix, labels: &[usize]) -> (f64, DenseMatrix) {
        match &self.level_map {
            Some(map) => {
                let mapped: Vec<usize> = labels.iter().map(|&y| map[y]).collect();
                smoothed_ce_loss(logits, &mapped, self.smoothing)
            }
            None => smoothed_ce_loss(logits, labels, self.smoothing),
        }
    }
}

fn log_sum_exp<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|&v| (v - max).exp()).sum::<f64>().ln()
}

fn row_lse(row: ArrayView1<f64>) -> f64 {
    log_sum_exp(row.iter())
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let lse = row_lse(row.view());
        row.mapv_inplace(|v| (v - lse).exp());
    }
    out
}

/// Index of the largest entry per row; ties go to the lower index.
pub fn argmax_rows(logits: &DenseMatrix) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Label-smoothed cross-entropy with targets `(1-ε)·onehot + ε/K`.
pub fn smoothed_ce_loss(logits: &DenseMatrix, labels: &[usize], smoothing: f64) -> (f64, DenseMatrix) {
    let (b, k) = logits.dim();
    assert_eq!(labels.len(), b, "one label per row");
    assert!((0.0..1.0).contains(&smoothing), "smoothing must lie in [0, 1)");
    let off = smoothing / k as f64;
    let on = 1.0 - smoothing + off;
    let mut grad = Array2::zeros((b, k));
    let mut total = 0.0;
    for (j, (row, &y)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        assert!(y < k, "label {y} out of range for {k} classes");
        let lse = row_lse(row);
        let mut loss = 0.0;
        for (c, &z) in row.iter().enumerate() {
            let q = if c == y { on } else { off };
            if q != 0.0 {
                loss += q * (lse - z);
            }
            grad[[j, c]] = ((z - lse).exp() - q) / b as f64;
        }
        total += loss;
    }
    (total / b as f64, grad)
}

/// Negative log of the softmax mass that falls inside the true class's
/// cluster, `-log Σ_{c ∈ C(y)} softmax(z)_c`, averaged over the batch.
pub fn coarse_cluster_loss(
    logits: &DenseMatrix,
    labels: &[usize],
    level_map: &[usize],
) -> (f64, DenseMatrix) {
    let (b, k) = logits.dim();
    assert_eq!(labels.len(), b, "one label per row");
    assert_eq!(level_map.len(), k, "level map covers every class");
    let mut grad = Array2::zeros((b, k));
    let mut total = 0.0;
    for (j, (row, &y)) in logits.axis_iter(Axis(0)).zip(labels).enumerate() {
        assert!(y < k, "label {y} out of range for {k} classes");
        let cluster = level_map[y];
        let lse_all = row_lse(row);
        let lse_in = log_sum_exp(
            row.iter()
                .zip(level_map)
                .filter(|(_, &m)| m == cluster)
                .map(|(z, _)| z),
        );
        total += lse_all - lse_in;
        for (c, &z) in row.iter().enumerate() {
            let inside = if level_map[c] == cluster {
                (z - lse_in).exp()
            } else {
                0.0
            };
            grad[[j, c]] = ((z - lse_all).exp() - inside) / b as f64;
        }
    }
    (total / b as f64, grad)
}
