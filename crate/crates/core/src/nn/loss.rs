use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    SoftmaxCrossEntropy,
    /// Squared error of the probability-weighted expected rating.
    MeanSquaredError,
    SumOfBoth,
}

/// Rating represented by class `i`: 0.5 + 0.5·i.
pub fn class_rating(class: usize) -> f64 {
    0.5 + 0.5 * class as f64
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean loss over the batch and its gradient with respect to the logits.
pub fn loss_and_grad(kind: LossKind, logits: &Array2<f64>, targets: &[usize]) -> Result<(f64, Array2<f64>)> {
    let rows = logits.nrows();
    if rows == 0 {
        return Err(Error::data("empty batch"));
    }
    if targets.len() != rows {
        return Err(Error::data(format!("{} targets for {rows} rows", targets.len())));
    }
    let classes = logits.ncols();
    if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::data(format!(
            "target class {bad} out of range ({classes} classes)"
        )));
    }
    let probs = softmax_rows(logits);
    let n = rows as f64;
    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros(logits.raw_dim());

    if matches!(kind, LossKind::SoftmaxCrossEntropy | LossKind::SumOfBoth) {
        for (r, &t) in targets.iter().enumerate() {
            let row = logits.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += (lse - row[t]) / n;
            for c in 0..classes {
                grad[[r, c]] += probs[[r, c]] / n;
            }
            grad[[r, t]] -= 1.0 / n;
        }
    }
    if matches!(kind, LossKind::MeanSquaredError | LossKind::SumOfBoth) {
        for (r, &t) in targets.iter().enumerate() {
            let p = probs.row(r);
            let expected: f64 = p.iter().enumerate().map(|(c, pc)| pc * class_rating(c)).sum();
            let err = expected - class_rating(t);
            loss += err * err / n;
            for c in 0..classes {
                grad[[r, c]] += 2.0 * err / n * p[c] * (class_rating(c) - expected);
            }
        }
    }
    Ok((loss, grad))
}
