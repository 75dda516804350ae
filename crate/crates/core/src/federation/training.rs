use serde::{Deserialize, Serialize};

use crate::data::ClientPartition;
use crate::error::{Error, Result};
use crate::federation::{
    plan_round, run_fedavg_round, run_fedq_round, Algorithm, LocalConfig, Residency, RoundContext, StepCounter,
};
use crate::models::{evaluate, EvalMetrics, Example};
use crate::nn::{LossKind, ModelSpec, ParameterSet};
use crate::rng::{self, streams, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub clients_per_round: usize,
    /// FedQ queue length; must divide `clients_per_round`. Ignored by FedAvg.
    pub queue_length: usize,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub loss: LossKind,
    /// Reshuffle each client's data every local epoch.
    pub shuffle_local: bool,
    pub parallel_queues: bool,
    /// Evaluate every this many rounds (the initial and final models are always evaluated).
    pub eval_every: usize,
    pub top_k: usize,
    pub eval_batch_size: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            clients_per_round: 100,
            queue_length: 10,
            batch_size: 16,
            local_epochs: 1,
            learning_rate: 0.1,
            algorithm: Algorithm::FedQ,
            seed: 0,
            loss: LossKind::SoftmaxCrossEntropy,
            shuffle_local: true,
            parallel_queues: false,
            eval_every: 1,
            top_k: 10,
            eval_batch_size: 1024,
        }
    }
}

impl FederationConfig {
    pub fn effective_queue_length(&self) -> usize {
        match self.algorithm {
            Algorithm::FedAvg => 1,
            Algorithm::FedQ => self.queue_length,
        }
    }

    pub fn local(&self) -> LocalConfig {
        LocalConfig {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            loss: self.loss,
        }
    }

    pub fn validate(&self, population: usize) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > population {
            return Err(Error::config(format!(
                "clients_per_round {} must be in 1..={population}",
                self.clients_per_round
            )));
        }
        let l = self.effective_queue_length();
        if l == 0 || !self.clients_per_round.is_multiple_of(l) {
            return Err(Error::config(format!(
                "queue_length {l} must divide clients_per_round {}",
                self.clients_per_round
            )));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.top_k == 0 || self.eval_batch_size == 0 {
            return Err(Error::config(
                "batch_size, eval_every, top_k and eval_batch_size must be >= 1",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A model as delivered to the other side of a link.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub params: ParameterSet,
    pub bytes: u64,
}

/// How parameter sets travel between server and clients.
pub trait Transport: Sync {
    fn transmit(&self, params: &ParameterSet) -> Result<Transmission>;
}

/// Uncompressed float32 transfer; the payload is passed on unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTransport;

impl Transport for IdentityTransport {
    fn transmit(&self, params: &ParameterSet) -> Result<Transmission> {
        Ok(Transmission {
            params: params.clone(),
            bytes: 4 * params.scalar_count() as u64,
        })
    }
}

/// One line of the metric series. Round 0 describes the initial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: usize,
    pub algorithm: Algorithm,
    pub clients: usize,
    pub queues: usize,
    pub steps: StepCounter,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub train_loss: Option<f64>,
    pub validation: Option<EvalMetrics>,
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub next_round: usize,
    pub global: ParameterSet,
    pub selection_rng: RngState,
    pub cumulative_steps: u64,
    pub history: Vec<MetricsRecord>,
}

impl TrainingState {
    pub fn initial(cfg: &FederationConfig, global: ParameterSet) -> Self {
        Self {
            next_round: 1,
            global,
            selection_rng: RngState::capture(&rng::stream(cfg.seed, streams::SELECTION)),
            cumulative_steps: 0,
            history: Vec::new(),
        }
    }
}

/// Expected sequential local steps per queue:
/// `E · mean_i ⌈|D_i| / B⌉`, times the queue length for FedQ.
pub fn expected_round_steps(cfg: &FederationConfig, partition: &ClientPartition) -> Result<f64> {
    if partition.clients.is_empty() || cfg.batch_size == 0 {
        return Err(Error::config(
            "expected steps need a non-empty partition and batch size >= 1",
        ));
    }
    let per_client: f64 = partition
        .clients
        .iter()
        .map(|c| c.len().div_ceil(cfg.batch_size) as f64)
        .sum::<f64>()
        / partition.clients.len() as f64;
    Ok(cfg.local_epochs as f64 * per_client * cfg.effective_queue_length() as f64)
}

/// Federated training from `state` up to `cfg.rounds`. `on_round` sees the
/// state after every round (for checkpointing) and may stop early by
/// returning `false`.
#[allow(clippy::too_many_arguments)]
pub fn run_training<T: Example>(
    cfg: &FederationConfig,
    spec: &ModelSpec,
    partition: &ClientPartition,
    train: &[T],
    validation: &[T],
    transport: &dyn Transport,
    residency: Option<&Residency>,
    mut state: TrainingState,
    mut on_round: impl FnMut(&TrainingState, &MetricsRecord) -> Result<bool>,
) -> Result<TrainingState> {
    cfg.validate(partition.num_clients())?;
    partition.validate(train.len())?;
    if spec.has_batch_norm() {
        return Err(Error::config(
            "federated training needs batch-size independent normalization; use group norm",
        ));
    }
    spec.check_params(&state.global)?;
    let eval = |params: &ParameterSet| -> Result<Option<EvalMetrics>> {
        if validation.is_empty() {
            return Ok(None);
        }
        evaluate(spec, params, None, validation, cfg.loss, cfg.top_k, cfg.eval_batch_size).map(Some)
    };

    if state.next_round == 1 && state.history.is_empty() {
        let record = MetricsRecord {
            round: 0,
            algorithm: cfg.algorithm,
            clients: 0,
            queues: 0,
            steps: StepCounter::default(),
            bytes_up: 0,
            bytes_down: 0,
            train_loss: None,
            validation: eval(&state.global)?,
        };
        state.history.push(record.clone());
        if !on_round(&state, &record)? {
            return Ok(state);
        }
    }

    let ctx = RoundContext {
        spec,
        partition,
        samples: train,
        local: cfg.local(),
        seed: cfg.seed,
        shuffle_local: cfg.shuffle_local,
        parallel_queues: cfg.parallel_queues,
        transport,
        residency,
    };
    let mut selection = state.selection_rng.restore();
    while state.next_round <= cfg.rounds {
        let round = state.next_round;
        let plan = plan_round(
            round,
            partition.num_clients(),
            cfg.clients_per_round,
            cfg.effective_queue_length(),
            &mut selection,
        )?;
        let outcome = match cfg.algorithm {
            Algorithm::FedAvg => run_fedavg_round(&ctx, &state.global, &plan)?,
            Algorithm::FedQ => run_fedq_round(&ctx, &state.global, &plan)?,
        };
        state.cumulative_steps += outcome.steps.local_gradient_steps_this_round;
        let mut steps = outcome.steps;
        steps.cumulative = state.cumulative_steps;
        let evaluate_now = round.is_multiple_of(cfg.eval_every) || round == cfg.rounds;
        let record = MetricsRecord {
            round,
            algorithm: cfg.algorithm,
            clients: plan.selected_clients.len(),
            queues: plan.queues.len(),
            steps,
            bytes_up: outcome.bytes_up,
            bytes_down: outcome.bytes_down,
            train_loss: Some(outcome.train_loss),
            validation: if evaluate_now { eval(&outcome.global)? } else { None },
        };
        state.global = outcome.global;
        state.selection_rng = RngState::capture(&selection);
        state.next_round = round + 1;
        state.history.push(record.clone());
        if !on_round(&state, &record)? {
            break;
        }
    }
    Ok(state)
}
