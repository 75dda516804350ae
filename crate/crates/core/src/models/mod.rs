//! Candidate-generator and ranker architectures, batching and evaluation.

mod batch;
mod config;
mod eval;

pub use batch::{Example, RatingBatch, WatchHistoryBatch, PADDING_INDEX};
pub use config::{
    build_candidate_generator, build_ranker, candidate_generator_spec, ranker_spec, CandidateGeneratorConfig, NormKind,
    RankerConfig,
};
pub use eval::{evaluate, in_top_k, predict_top_k, predicted_rating, EvalMetrics};
