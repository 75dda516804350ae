//! Federated training simulator for a two-stage movie recommender.
//!
//! * [`nn`]: float64 dense network engine with exact backprop.
//! * [`models`]: candidate generator and ranker architectures, top-k helpers.
//! * [`data`]: MovieLens ingestion, sample construction, partitioning, synthetic corpora.
//! * [`federation`]: FedAvg and queue-chained FedQ rounds with cumulative aggregation.
//! * [`compression`]: step-size quantization and a context-adaptive binary arithmetic coder.

mod binio;
pub mod compression;
pub mod data;
pub mod error;
pub mod federation;
pub mod models;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
