//! Confusion matrices and per-class / macro-averaged precision, recall and F1.
//!
//! Macro values are unweighted means over all `K` classes, including classes
//! that never occur in either vector; every `0/0` is defined as `0`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class index {index} out of range for {num_classes} classes")]
    ClassOutOfRange { index: usize, num_classes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub n_samples: usize,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores `predictions` against `labels` over `num_classes` classes.
pub fn evaluate(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<EvalReport, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        for index in [p, y] {
            if index >= num_classes {
                return Err(MetricsError::ClassOutOfRange { index, num_classes });
            }
        }
        confusion[y][p] += 1;
    }

    let per_class: Vec<ClassScores> = (0..num_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let actual: u64 = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
            }
        })
        .collect();

    let mean = |f: fn(&ClassScores) -> f64| {
        if num_classes == 0 {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / num_classes as f64
        }
    };
    Ok(EvalReport {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        per_class,
        confusion,
        n_samples: labels.len(),
    })
}

/// Shorthand for the selection metric.
pub fn macro_f1(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<f64, MetricsError> {
    evaluate(predictions, labels, num_classes).map(|r| r.macro_f1)
}

/// Renders rows of `(name, report)` as a Recall / Precision / F1-score table
/// with two-decimal percentages.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$} | {:>8} | {:>9} | {:>8}",
        "Method", "Recall", "Precision", "F1-score"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 36));
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{:<width$} | {:>7.2}% | {:>8.2}% | {:>7.2}%",
            name,
            100.0 * r.macro_recall,
            100.0 * r.macro_precision,
            100.0 * r.macro_f1
        );
    }
    out
}
