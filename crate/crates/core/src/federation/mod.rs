//! FedAvg and queue-chained FedQ rounds over a simulated client population.
//!
//! Clients train strictly one after another inside a queue; queues of a
//! round may run concurrently, but their results are always folded into the
//! global model in plan order, so every mode yields identical parameters.

mod aggregate;
mod client;
mod plan;
mod round;
mod training;

pub use aggregate::{AggregationState, AGGREGATION_TOLERANCE};
pub use client::{client_update, ClientUpdate, LocalConfig};
pub use plan::{make_queues, plan_round, subsample_clients, RoundPlan};
pub use round::{run_fedavg_round, run_fedq_round, run_round, Residency, RoundContext, RoundOutcome, StepCounter};
pub use training::{
    expected_round_steps, run_training, FederationConfig, IdentityTransport, MetricsRecord, TrainingState,
    Transmission, Transport,
};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    FedAvg,
    FedQ,
}
