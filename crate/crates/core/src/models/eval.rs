use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Example;
use crate::nn::{class_rating, forward, loss_and_grad, LossKind, ModelSpec, ParameterSet, Phase};

/// Class indices of the `k` largest logits, best first; equal logits rank
/// the lower index first.
pub fn predict_top_k(logits: ArrayView1<'_, f64>, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > logits.len() {
        return Err(Error::Argument(format!("k = {k} outside 1..={}", logits.len())));
    }
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    let cmp = |a: &usize, b: &usize| logits[*b].total_cmp(&logits[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx)
}

/// Whether `class` would appear in [`predict_top_k`]'s output, by counting
/// the classes ranked ahead of it.
pub fn in_top_k(logits: ArrayView1<'_, f64>, class: usize, k: usize) -> bool {
    let v = logits[class];
    let ahead = logits
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > v || (x == v && j < class))
        .count();
    ahead < k
}

fn argmax(logits: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (j, &x) in logits.iter().enumerate() {
        if x > logits[best] {
            best = j;
        }
    }
    best
}

/// Rating of the highest-scoring class: 0.5 + 0.5·argmax.
pub fn predicted_rating(logits: ArrayView1<'_, f64>) -> f64 {
    class_rating(argmax(logits))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub top_k: f64,
    /// Mean squared error of the argmax rating; only for rating models.
    pub mse: Option<f64>,
}

/// Averages loss and accuracy metrics over `samples`, evaluated in chunks of
/// `batch_size`. BatchNorm models use `running` statistics.
pub fn evaluate<T: Example>(
    spec: &ModelSpec,
    params: &ParameterSet,
    running: Option<&ParameterSet>,
    samples: &[T],
    loss: LossKind,
    k: usize,
    batch_size: usize,
) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::data("cannot evaluate on an empty sample set"));
    }
    if batch_size == 0 || k == 0 {
        return Err(Error::config("evaluation batch size and k must be >= 1"));
    }
    let phase = match (spec.has_batch_norm(), running) {
        (false, _) => Phase::Train,
        (true, Some(r)) => Phase::Eval(r),
        (true, None) => return Err(Error::config("batch-norm model evaluated without running statistics")),
    };
    let k = k.min(spec.output_dim());
    let (mut loss_sum, mut hits1, mut hitsk, mut sq) = (0.0, 0usize, 0usize, 0.0);
    for chunk in samples.chunks(batch_size) {
        let refs: Vec<&T> = chunk.iter().collect();
        let batch = T::to_batch(spec, &refs)?;
        let logits: Array2<f64> = forward(spec, params, &batch, phase)?.into_logits();
        let (l, _) = loss_and_grad(loss, &logits, &batch.targets)?;
        loss_sum += l * chunk.len() as f64;
        for (row, &t) in logits.rows().into_iter().zip(&batch.targets) {
            let best = argmax(row);
            hits1 += usize::from(best == t);
            hitsk += usize::from(in_top_k(row, t, k));
            if T::RATING_CLASSES {
                let d = class_rating(best) - class_rating(t);
                sq += d * d;
            }
        }
    }
    let n = samples.len() as f64;
    Ok(EvalMetrics {
        samples: samples.len(),
        loss: loss_sum / n,
        accuracy: hits1 as f64 / n,
        top_k: hitsk as f64 / n,
        mse: T::RATING_CLASSES.then(|| sq / n),
    })
}
