//! MovieLens-format ingestion, dataset statistics, sample construction,
//! client partitioning and a synthetic corpus generator.

mod files;
mod movielens;
mod partition;
mod samples;
mod stats;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use files::{
    decode_partition, decode_rating_samples, decode_watch_histories, encode_partition, encode_rating_samples,
    encode_watch_histories, PARTITION_MAGIC, SAMPLES_MAGIC,
};
pub use movielens::{apply_release_years, load_corpus, load_interactions, load_release_years, Corpus, IdMaps};
pub use partition::{partition_by_user, partition_iid, train_val_split, ClientPartition, EmbeddingIds, PartitionKind};
pub use samples::{build_rating_samples, build_watch_histories, order_user_history};
pub use stats::{dataset_stats, DatasetStats, Histogram, COUNT_BIN_EDGES, GAP_BIN_EDGES_SECONDS};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticCorpus};

pub const NO_GENRES: &str = "(no genres listed)";

/// One rating event with dense, 0-based ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: u32,
    pub movie_id: u32,
    /// One of 0.5, 1.0, …, 5.0.
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovieMeta {
    pub movie_id: u32,
    /// Never empty; movies without genres carry the `(no genres listed)` id.
    pub genre_ids: Vec<u32>,
    pub release_year: Option<i32>,
}

/// Per-user ordering applied before building watch histories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    #[default]
    TimestampAsc,
    TimestampDesc,
    RatingAsc,
    RatingDesc,
    Random,
}

/// Previous watches (oldest first, movie ids) and the next watch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchHistorySample {
    pub user_id: u32,
    pub history: Vec<u32>,
    pub target: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSample {
    pub user_id: u32,
    pub movie_id: u32,
    pub genre_ids: Vec<u32>,
    /// Normalized to [-1, 1]; 0 when movie age is disabled.
    pub movie_age: f64,
    /// 2·rating − 1, in 0..=9.
    pub rating_class: u8,
}

/// Rating on the 0.5 grid to its class index, `None` when off-grid.
pub fn rating_to_class(rating: f64) -> Option<u8> {
    let doubled = rating * 2.0;
    if (doubled - doubled.round()).abs() > 1e-9 {
        return None;
    }
    let d = doubled.round() as i64;
    (1..=10).contains(&d).then(|| (d - 1) as u8)
}

/// Anything that carries a user id, for per-user partitioning.
pub trait HasUser {
    fn user(&self) -> u32;
}

impl HasUser for WatchHistorySample {
    fn user(&self) -> u32 {
        self.user_id
    }
}

impl HasUser for RatingSample {
    fn user(&self) -> u32 {
        self.user_id
    }
}
