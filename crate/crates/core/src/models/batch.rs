use ndarray::Array2;

use crate::data::{RatingSample, WatchHistorySample};
use crate::error::{Error, Result};
use crate::nn::{Batch, IndexBags, InputField, InputSpec, ModelSpec};

/// Input row reserved for padding in the candidate generator; movie `m`
/// is looked up at row `m + 1`.
pub const PADDING_INDEX: usize = 0;

/// A training or evaluation example that can be packed into a model batch.
pub trait Example: Sync {
    /// Whether the model's classes are half-star ratings, enabling rating MSE.
    const RATING_CLASSES: bool;

    fn target(&self) -> usize;

    fn to_batch(spec: &ModelSpec, items: &[&Self]) -> Result<Batch>;
}

/// Histories right-padded with [`PADDING_INDEX`] to a common width.
#[derive(Debug, Clone, PartialEq)]
pub struct WatchHistoryBatch {
    pub histories: Array2<usize>,
    pub lengths: Vec<usize>,
    pub targets: Vec<usize>,
}

impl WatchHistoryBatch {
    pub fn from_samples(items: &[&WatchHistorySample]) -> Result<Self> {
        let width = items.iter().map(|s| s.history.len()).max().unwrap_or(0);
        let mut histories = Array2::from_elem((items.len(), width.max(1)), PADDING_INDEX);
        let mut lengths = Vec::with_capacity(items.len());
        for (r, s) in items.iter().enumerate() {
            if s.history.is_empty() {
                return Err(Error::data(format!(
                    "sample for user {} has an empty history",
                    s.user_id
                )));
            }
            for (c, &m) in s.history.iter().enumerate() {
                histories[[r, c]] = m as usize + 1;
            }
            lengths.push(s.history.len());
        }
        Ok(Self {
            histories,
            lengths,
            targets: items.iter().map(|s| s.target as usize).collect(),
        })
    }

    pub fn into_batch(self) -> Batch {
        let rows: Vec<Vec<usize>> = self.histories.rows().into_iter().map(|r| r.to_vec()).collect();
        Batch {
            inputs: vec![InputField::Bags(IndexBags::from_rows(&rows))],
            targets: self.targets,
        }
    }
}

impl Example for WatchHistorySample {
    const RATING_CLASSES: bool = false;

    fn target(&self) -> usize {
        self.target as usize
    }

    fn to_batch(_spec: &ModelSpec, items: &[&Self]) -> Result<Batch> {
        Ok(WatchHistoryBatch::from_samples(items)?.into_batch())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingBatch {
    pub user_ids: Vec<usize>,
    pub movie_ids: Vec<usize>,
    pub genre_ids: Vec<Vec<usize>>,
    pub movie_age: Vec<f64>,
    pub rating_class: Vec<usize>,
}

impl RatingBatch {
    pub fn from_samples(items: &[&RatingSample]) -> Self {
        Self {
            user_ids: items.iter().map(|s| s.user_id as usize).collect(),
            movie_ids: items.iter().map(|s| s.movie_id as usize).collect(),
            genre_ids: items
                .iter()
                .map(|s| s.genre_ids.iter().map(|&g| g as usize).collect())
                .collect(),
            movie_age: items.iter().map(|s| s.movie_age).collect(),
            rating_class: items.iter().map(|s| s.rating_class as usize).collect(),
        }
    }

    /// Packs the fields in the ranker's input order; movie age is included
    /// only when the model declares the dense input.
    pub fn into_batch(self, with_movie_age: bool) -> Batch {
        let mut inputs = vec![
            InputField::Bags(IndexBags::singles(&self.user_ids)),
            InputField::Bags(IndexBags::singles(&self.movie_ids)),
            InputField::Bags(IndexBags::from_rows(&self.genre_ids)),
        ];
        if with_movie_age {
            let n = self.movie_age.len();
            inputs.push(InputField::Dense(
                Array2::from_shape_vec((n, 1), self.movie_age).expect("one column per row"),
            ));
        }
        Batch {
            inputs,
            targets: self.rating_class,
        }
    }
}

impl Example for RatingSample {
    const RATING_CLASSES: bool = true;

    fn target(&self) -> usize {
        self.rating_class as usize
    }

    fn to_batch(spec: &ModelSpec, items: &[&Self]) -> Result<Batch> {
        let with_age = spec.inputs().iter().any(|i| matches!(i, InputSpec::Dense { .. }));
        Ok(RatingBatch::from_samples(items).into_batch(with_age))
    }
}
