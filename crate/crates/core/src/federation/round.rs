use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientPartition;
use crate::error::{Error, Result};
use crate::federation::{client_update, AggregationState, LocalConfig, RoundPlan, Transport};
use crate::models::Example;
use crate::nn::{ModelSpec, ParameterSet};
use crate::rng;

/// Local gradient steps of one round, plus the running total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepCounter {
    /// Steps summed over every selected client.
    pub local_gradient_steps_this_round: u64,
    /// Longest queue, in sequential steps: the round's wall-clock proxy.
    pub critical_path_steps: u64,
    /// Mean sequential steps per queue.
    pub mean_queue_steps: f64,
    pub cumulative: u64,
}

/// Counts client models resident at once.
#[derive(Debug, Default)]
pub struct Residency {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl Residency {
    fn enter(&self) {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn leave(&self) {
        self.current.fetch_sub(1, Ordering::SeqCst);
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::SeqCst)
    }
}

/// Everything a round needs besides the global model and the plan.
pub struct RoundContext<'a, T> {
    pub spec: &'a ModelSpec,
    pub partition: &'a ClientPartition,
    pub samples: &'a [T],
    pub local: LocalConfig,
    /// Seeds the per-client reshuffling streams when `shuffle_local` is set.
    pub seed: u64,
    pub shuffle_local: bool,
    pub parallel_queues: bool,
    pub transport: &'a dyn Transport,
    pub residency: Option<&'a Residency>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub global: ParameterSet,
    pub steps: StepCounter,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Mean mini-batch loss over all local steps of the round.
    pub train_loss: f64,
}

struct QueueResult {
    final_params: ParameterSet,
    sample_count: usize,
    steps: u64,
    loss_sum: f64,
    bytes_up: u64,
    bytes_handoff: u64,
}

fn client_stream_name(round: usize, client: usize) -> String {
    format!("{}/{round}/{client}", rng::streams::SHUFFLE)
}

fn run_queue<T: Example>(
    ctx: &RoundContext<'_, T>,
    round: usize,
    start: &ParameterSet,
    queue: &[usize],
) -> Result<QueueResult> {
    let mut current: Option<ParameterSet> = None;
    let (mut steps, mut loss_sum, mut bytes_up, mut bytes_handoff) = (0u64, 0.0, 0u64, 0u64);
    let mut sample_count = 0;
    for (pos, &client) in queue.iter().enumerate() {
        if let Some(r) = ctx.residency {
            r.enter();
        }
        let data: Vec<&T> = ctx.partition.client(client).iter().map(|&i| &ctx.samples[i]).collect();
        let mut order_rng = ctx
            .shuffle_local
            .then(|| rng::stream(ctx.seed, &client_stream_name(round, client)));
        let update = client_update(
            ctx.spec,
            current.as_ref().unwrap_or(start),
            &data,
            &ctx.local,
            order_rng.as_mut(),
        );
        sample_count += data.len();
        drop(data);
        if let Some(r) = ctx.residency {
            r.leave();
        }
        let update = update?;
        let sent = ctx.transport.transmit(&update.params)?;
        bytes_up += sent.bytes;
        if pos + 1 < queue.len() {
            bytes_handoff += sent.bytes;
        }
        steps += update.steps;
        loss_sum += update.loss_sum;
        current = Some(sent.params);
    }
    Ok(QueueResult {
        final_params: current.ok_or_else(|| Error::Internal("empty queue".into()))?,
        sample_count,
        steps,
        loss_sum,
        bytes_up,
        bytes_handoff,
    })
}

/// Runs every queue of `plan` from the (transmitted) global model and
/// aggregates the queue-final models weighted by their total sample count.
pub fn run_round<T: Example>(
    ctx: &RoundContext<'_, T>,
    global: &ParameterSet,
    plan: &RoundPlan,
) -> Result<RoundOutcome> {
    if plan.queues.is_empty() {
        return Err(Error::config("round plan has no queues"));
    }
    let total: usize = plan
        .queues
        .iter()
        .flatten()
        .map(|&c| {
            ctx.partition
                .clients
                .get(c)
                .map(Vec::len)
                .ok_or_else(|| Error::config(format!("unknown client {c}")))
        })
        .sum::<Result<usize>>()?;
    let download = ctx.transport.transmit(global)?;
    let mut state = AggregationState::new(global, total as f64)?;
    let mut steps = StepCounter::default();
    let (mut loss_sum, mut bytes_up) = (0.0, 0u64);
    let mut bytes_down = download.bytes * plan.queues.len() as u64;

    let mut absorb = |q: QueueResult| -> Result<()> {
        state.accumulate(&q.final_params, q.sample_count as f64)?;
        steps.local_gradient_steps_this_round += q.steps;
        steps.critical_path_steps = steps.critical_path_steps.max(q.steps);
        loss_sum += q.loss_sum;
        bytes_up += q.bytes_up;
        bytes_down += q.bytes_handoff;
        Ok(())
    };
    if ctx.parallel_queues {
        let results: Vec<Result<QueueResult>> = plan
            .queues
            .par_iter()
            .map(|q| run_queue(ctx, plan.round_index, &download.params, q))
            .collect();
        for r in results {
            absorb(r?)?;
        }
    } else {
        for q in &plan.queues {
            absorb(run_queue(ctx, plan.round_index, &download.params, q)?)?;
        }
    }
    steps.mean_queue_steps = steps.local_gradient_steps_this_round as f64 / plan.queues.len() as f64;
    let train_loss = if steps.local_gradient_steps_this_round > 0 {
        loss_sum / steps.local_gradient_steps_this_round as f64
    } else {
        0.0
    };
    Ok(RoundOutcome {
        global: state.finish()?,
        steps,
        bytes_up,
        bytes_down,
        train_loss,
    })
}

/// One FedAvg round: every queue holds a single client.
pub fn run_fedavg_round<T: Example>(
    ctx: &RoundContext<'_, T>,
    global: &ParameterSet,
    plan: &RoundPlan,
) -> Result<RoundOutcome> {
    if plan.queues.iter().any(|q| q.len() != 1) {
        return Err(Error::config("FedAvg rounds take singleton queues"));
    }
    run_round(ctx, global, plan)
}

/// One FedQ round: clients in a queue chain their local training.
pub fn run_fedq_round<T: Example>(
    ctx: &RoundContext<'_, T>,
    global: &ParameterSet,
    plan: &RoundPlan,
) -> Result<RoundOutcome> {
    let l = plan.queue_length();
    if l == 0 || plan.queues.iter().any(|q| q.len() != l) {
        return Err(Error::config("FedQ rounds take queues of one common length"));
    }
    run_round(ctx, global, plan)
}
