use ndarray::{Array2, Axis};

use super::HierarchyError;
use crate::data::Samples;
use crate::network::{self, ModelParams};
use crate::DenseMatrix;

/// Symmetric, zero-diagonal, finite and nonnegative `K×K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix(DenseMatrix);

impl DistanceMatrix {
    pub fn new(d: DenseMatrix) -> Result<Self, HierarchyError> {
        let invalid = |m: String| Err(HierarchyError::InvalidDistance(m));
        let (rows, cols) = d.dim();
        if rows != cols {
            return invalid(format!("{rows}x{cols} is not square"));
        }
        if rows < 2 {
            return invalid("fewer than two classes".into());
        }
        for i in 0..rows {
            if d[[i, i]] != 0.0 {
                return invalid(format!("nonzero diagonal at {i}"));
            }
            for j in 0..rows {
                let v = d[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return invalid(format!("entry ({i},{j}) = {v}"));
                }
                if v != d[[j, i]] {
                    return invalid(format!("asymmetric at ({i},{j})"));
                }
            }
        }
        Ok(Self(d))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn as_matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Pairwise cosine distances between the columns of an `E×K` predictor.
pub fn cosine_distance_matrix(weights: &DenseMatrix) -> Result<DistanceMatrix, HierarchyError> {
    let (rows, k) = weights.dim();
    if rows == 0 || k < 2 {
        return Err(HierarchyError::InvalidDistance(format!(
            "predictor of shape {rows}x{k}"
        )));
    }
    let norms: Vec<f64> = weights
        .columns()
        .into_iter()
        .map(|c| c.dot(&c).sqrt())
        .collect();
    if let Some(k) = norms.iter().position(|&n| n < 1e-12) {
        return Err(HierarchyError::ZeroColumn(k));
    }
    let mut d = Array2::zeros((k, k));
    for i in 0..k {
        for j in i + 1..k {
            let cos = weights.column(i).dot(&weights.column(j)) / (norms[i] * norms[j]);
            let v = (1.0 - cos).clamp(0.0, 2.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DistanceMatrix::new(d)
}

/// Row-normalized soft confusion mass. Rows of classes with no validation
/// samples stay all-zero and are listed in `empty_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftConfusion {
    pub c: DenseMatrix,
    pub empty_classes: Vec<usize>,
}

impl SoftConfusion {
    /// Normalizes each row with nonzero mass to sum to one.
    pub fn normalize_rows(raw: DenseMatrix) -> Self {
        let mut c = raw;
        let mut empty_classes = Vec::new();
        for (i, mut row) in c.axis_iter_mut(Axis(0)).enumerate() {
            let total = row.sum();
            if total > 0.0 {
                row.mapv_inplace(|v| v / total);
            } else {
                empty_classes.push(i);
            }
        }
        Self { c, empty_classes }
    }
}

/// Accumulates predicted class distributions by true label and normalizes.
pub fn soft_confusion_from_probs(
    probs: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
) -> Result<SoftConfusion, HierarchyError> {
    if labels.is_empty() {
        return Err(HierarchyError::EmptyValidation);
    }
    assert_eq!(probs.dim(), (labels.len(), num_classes), "probability shape");
    let mut raw = Array2::zeros((num_classes, num_classes));
    for (row, &y) in probs.axis_iter(Axis(0)).zip(labels) {
        if y >= num_classes {
            return Err(HierarchyError::LabelOutOfRange {
                label: y,
                num_classes,
            });
        }
        let mut target = raw.row_mut(y);
        target += &row;
    }
    Ok(SoftConfusion::normalize_rows(raw))
}

/// Soft confusion of `model` on a validation set.
pub fn soft_confusion(
    model: &ModelParams,
    validation: &Samples,
) -> Result<SoftConfusion, HierarchyError> {
    if validation.labels.is_empty() {
        return Err(HierarchyError::EmptyValidation);
    }
    let logits = network::forward(model, &validation.features)?;
    let probs = network::softmax_rows(&logits);
    soft_confusion_from_probs(&probs, &validation.labels, model.k_out())
}

/// Turns `C + Cᵀ` into a distance by scaling against the largest off-diagonal
/// similarity: `d = 1 - Ĉ / max`.
pub fn confusion_to_distance(c: &SoftConfusion) -> Result<DistanceMatrix, HierarchyError> {
    let sym = &c.c + &c.c.t();
    let k = sym.nrows();
    let mut max = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                max = max.max(sym[[i, j]]);
            }
        }
    }
    if max <= 0.0 {
        return Err(HierarchyError::NoConfusion);
    }
    let mut d = Array2::zeros((k, k));
    for i in 0..k {
        for j in i + 1..k {
            let v = (1.0 - sym[[i, j]] / max).max(0.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DistanceMatrix::new(d)
}
