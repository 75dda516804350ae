//! Central finite differences, used as the independent oracle for `backward`.

use crate::error::{Error, Result};
use crate::nn::{forward, loss_and_grad, Batch, GradientSet, LossKind, ModelSpec, ParameterSet, Phase};

/// Training-phase loss of `params` on `batch`.
pub fn batch_loss(spec: &ModelSpec, params: &ParameterSet, batch: &Batch, kind: LossKind) -> Result<f64> {
    let pass = forward(spec, params, batch, Phase::Train)?;
    Ok(loss_and_grad(kind, pass.logits(), &batch.targets)?.0)
}

/// `(L(θ + ε e_i) − L(θ − ε e_i)) / 2ε` for every scalar parameter.
pub fn finite_difference_gradient(
    spec: &ModelSpec,
    params: &ParameterSet,
    batch: &Batch,
    kind: LossKind,
    epsilon: f64,
) -> Result<GradientSet> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::config(format!("epsilon must be > 0, got {epsilon}")));
    }
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    for t in 0..params.len() {
        for j in 0..params.tensor(t).len() {
            let original = params.tensor(t).data()[j];
            probe.tensor_mut(t).data_mut()[j] = original + epsilon;
            let up = batch_loss(spec, &probe, batch, kind)?;
            probe.tensor_mut(t).data_mut()[j] = original - epsilon;
            let down = batch_loss(spec, &probe, batch, kind)?;
            probe.tensor_mut(t).data_mut()[j] = original;
            grads.tensor_mut(t).data_mut()[j] = (up - down) / (2.0 * epsilon);
        }
    }
    Ok(grads)
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over all entries.
pub fn max_relative_error(a: &GradientSet, b: &GradientSet, floor: f64) -> Result<f64> {
    a.ensure_congruent(b)?;
    Ok(a.values()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max))
}
