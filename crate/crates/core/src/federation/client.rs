use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::models::Example;
use crate::nn::{backward, forward, loss_and_grad, sgd_step_in_place, LossKind, ModelSpec, ParameterSet, Phase};
use crate::rng::StreamRng;

/// Local training hyperparameters shared by every client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub params: ParameterSet,
    pub steps: u64,
    /// Sum over steps of the mini-batch loss.
    pub loss_sum: f64,
}

/// `E` epochs of sequential mini-batch SGD on the client's data, keeping the
/// last partial batch. With `order_rng` the data are reshuffled every epoch.
pub fn client_update<T: Example>(
    spec: &ModelSpec,
    params: &ParameterSet,
    data: &[&T],
    local: &LocalConfig,
    mut order_rng: Option<&mut StreamRng>,
) -> Result<ClientUpdate> {
    if data.is_empty() {
        return Err(Error::data("client has no local data"));
    }
    if local.batch_size == 0 {
        return Err(Error::config("batch size must be >= 1"));
    }
    let mut theta = params.clone();
    let mut order: Vec<&T> = data.to_vec();
    let mut steps = 0u64;
    let mut loss_sum = 0.0;
    for _ in 0..local.epochs {
        if let Some(rng) = order_rng.as_deref_mut() {
            order.shuffle(rng);
        }
        for chunk in order.chunks(local.batch_size) {
            let batch = T::to_batch(spec, chunk)?;
            let pass = forward(spec, &theta, &batch, Phase::Train)?;
            let (loss, dlogits) = loss_and_grad(local.loss, pass.logits(), &batch.targets)?;
            let grads = backward(spec, &theta, &pass, &dlogits)?;
            sgd_step_in_place(&mut theta, &grads, local.learning_rate)?;
            loss_sum += loss;
            steps += 1;
        }
    }
    Ok(ClientUpdate {
        params: theta,
        steps,
        loss_sum,
    })
}
