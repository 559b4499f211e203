//! Classification metrics over predicted labels and class scores.
//!
//! Conventions: macro averages run over the classes that actually occur in
//! the labels; AUC is one-vs-rest with tied scores counted half, which
//! equals the trapezoidal area under the ROC curve; argmax ties go to the
//! lowest index everywhere, so metric values never depend on iteration
//! order.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Index of the largest value, first one on ties.
pub fn argmax_low(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Mean per-class recall over classes present in the labels.
    pub balanced_accuracy: f64,
    /// Macro recall; identical to balanced accuracy by definition, kept as
    /// its own column for report readability.
    pub recall: f64,
    pub kappa: f64,
    /// Macro one-vs-rest area under the ROC curve.
    pub auc: f64,
    pub runtime_seconds: f64,
}

/// First 1-based index at which accuracy reaches the target, if any.
pub fn rounds_to_target(accuracies: &[f64], target: f64) -> Option<usize> {
    accuracies.iter().position(|&a| a >= target).map(|i| i + 1)
}

/// One-vs-rest AUC for a single class from raw scores. `positives` flags
/// the class membership per sample. Ties contribute half, so the result
/// matches both the rank-statistic and the trapezoid constructions.
fn auc_one_vs_rest(positives: &[bool], scores: &[f64]) -> Option<f64> {
    let p = positives.iter().filter(|&&x| x).count();
    let n = positives.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..positives.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut area = 0.0;
    let mut tp = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Walk one tie group at a time.
        let mut j = i;
        let mut group_tp = 0.0;
        let mut group_fp = 0.0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positives[order[j]] {
                group_tp += 1.0;
            } else {
                group_fp += 1.0;
            }
            j += 1;
        }
        area += group_fp * (tp + group_tp / 2.0);
        tp += group_tp;
        i = j;
    }
    Some(area / (p as f64 * n as f64))
}

/// Builds the full report from labels, predicted labels, and a score row
/// per sample. `runtime_seconds` is carried through untouched.
pub fn metrics_report(
    labels: &[usize],
    predictions: &[usize],
    scores: &Tensor,
    runtime_seconds: f64,
) -> Result<MetricsReport> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Argument("no samples".into()));
    }
    if predictions.len() != n || scores.rows() != n {
        return Err(Error::Dimension(format!(
            "{n} labels, {} predictions, {} score rows",
            predictions.len(),
            scores.rows()
        )));
    }
    let classes = scores.row_len();
    if let Some(&bad) = labels.iter().chain(predictions).find(|&&v| v >= classes) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }

    let mut confusion = vec![0u64; classes * classes];
    for (&t, &p) in labels.iter().zip(predictions) {
        confusion[t * classes + p] += 1;
    }
    let support: Vec<u64> = (0..classes)
        .map(|c| (0..classes).map(|p| confusion[c * classes + p]).sum())
        .collect();
    if support.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleClassLabels);
    }

    let correct: u64 = (0..classes).map(|c| confusion[c * classes + c]).sum();
    let accuracy = correct as f64 / n as f64;

    let mut recall_sum = 0.0;
    let mut present = 0.0;
    for c in 0..classes {
        if support[c] > 0 {
            recall_sum += confusion[c * classes + c] as f64 / support[c] as f64;
            present += 1.0;
        }
    }
    let recall = recall_sum / present;

    let pred_marginal: Vec<u64> = (0..classes)
        .map(|p| (0..classes).map(|c| confusion[c * classes + p]).sum())
        .collect();
    let nf = n as f64;
    let p_expected: f64 = (0..classes)
        .map(|c| (support[c] as f64 / nf) * (pred_marginal[c] as f64 / nf))
        .sum();
    let kappa = (accuracy - p_expected) / (1.0 - p_expected);

    let mut auc_sum = 0.0;
    let mut auc_classes = 0.0;
    let mut flags = vec![false; n];
    let mut col = vec![0.0; n];
    for c in 0..classes {
        for i in 0..n {
            flags[i] = labels[i] == c;
            col[i] = scores.row(i)[c];
        }
        if let Some(a) = auc_one_vs_rest(&flags, &col) {
            auc_sum += a;
            auc_classes += 1.0;
        }
    }
    let auc = auc_sum / auc_classes;

    Ok(MetricsReport {
        accuracy,
        balanced_accuracy: recall,
        recall,
        kappa,
        auc,
        runtime_seconds,
    })
}
