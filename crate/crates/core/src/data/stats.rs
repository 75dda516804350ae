use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{rating_to_class, Interaction};
use crate::error::{Error, Result};

/// Bin lower edges for per-user mean time between ratings:
/// 0, 1 min, 1 h, 1 day, 1 week, 30 days, 365 days (last bin open-ended).
pub const GAP_BIN_EDGES_SECONDS: [f64; 7] = [0.0, 60.0, 3_600.0, 86_400.0, 604_800.0, 2_592_000.0, 31_536_000.0];

/// Bin lower edges for ratings-per-user and ratings-per-movie counts (decades, last open-ended).
pub const COUNT_BIN_EDGES: [f64; 6] = [1.0, 10.0, 100.0, 1_000.0, 10_000.0, 100_000.0];

/// Bin `i` covers `[edges[i], edges[i + 1])`; the last bin has no upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(edges: &[f64], values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; edges.len()];
        for v in values {
            let bin = edges.iter().rposition(|&e| v >= e).unwrap_or(0);
            counts[bin] += 1;
        }
        Self {
            edges: edges.to_vec(),
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub interactions: usize,
    pub users: usize,
    pub movies: usize,
    pub mean_ratings_per_user: f64,
    pub min_ratings_per_user: usize,
    pub max_ratings_per_user: usize,
    pub mean_ratings_per_movie: f64,
    pub min_ratings_per_movie: usize,
    pub max_ratings_per_movie: usize,
    /// Mean over users (with ≥ 2 ratings) of their average gap between consecutive ratings.
    pub mean_inter_rating_seconds: f64,
    pub users_gap_below_minute: f64,
    pub users_gap_below_hour: f64,
    pub movies_below_10_ratings: f64,
    pub movies_below_100_ratings: f64,
    /// Share of all ratings cast on the 10 most-rated movies.
    pub top10_movie_share: f64,
    /// Counts for ratings 0.5, 1.0, …, 5.0.
    pub rating_value_counts: [u64; 10],
    pub inter_rating_time: Histogram,
    pub ratings_per_user: Histogram,
    pub ratings_per_movie: Histogram,
}

pub fn dataset_stats(interactions: &[Interaction]) -> Result<DatasetStats> {
    if interactions.is_empty() {
        return Err(Error::data("dataset statistics need at least one interaction"));
    }
    let mut per_user: HashMap<u32, Vec<i64>> = HashMap::new();
    let mut per_movie: HashMap<u32, usize> = HashMap::new();
    let mut rating_value_counts = [0u64; 10];
    for it in interactions {
        per_user.entry(it.user_id).or_default().push(it.timestamp);
        *per_movie.entry(it.movie_id).or_default() += 1;
        let class = rating_to_class(it.rating)
            .ok_or_else(|| Error::data(format!("rating {} is not on the 0.5 grid", it.rating)))?;
        rating_value_counts[class as usize] += 1;
    }

    let user_counts: Vec<usize> = per_user.values().map(Vec::len).collect();
    let mut movie_counts: Vec<usize> = per_movie.values().copied().collect();
    let gaps: Vec<f64> = per_user
        .values()
        .filter(|ts| ts.len() >= 2)
        .map(|ts| {
            let (lo, hi) = ts
                .iter()
                .fold((i64::MAX, i64::MIN), |(lo, hi), &t| (lo.min(t), hi.max(t)));
            (hi - lo) as f64 / (ts.len() - 1) as f64
        })
        .collect();
    let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let total = interactions.len();
    movie_counts.sort_unstable_by(|a, b| b.cmp(a));
    let top10: usize = movie_counts.iter().take(10).sum();

    Ok(DatasetStats {
        interactions: total,
        users: per_user.len(),
        movies: per_movie.len(),
        mean_ratings_per_user: total as f64 / per_user.len() as f64,
        min_ratings_per_user: *user_counts.iter().min().expect("non-empty"),
        max_ratings_per_user: *user_counts.iter().max().expect("non-empty"),
        mean_ratings_per_movie: total as f64 / per_movie.len() as f64,
        min_ratings_per_movie: *movie_counts.last().expect("non-empty"),
        max_ratings_per_movie: movie_counts[0],
        mean_inter_rating_seconds: if gaps.is_empty() {
            0.0
        } else {
            gaps.iter().sum::<f64>() / gaps.len() as f64
        },
        users_gap_below_minute: frac(gaps.iter().filter(|&&g| g < 60.0).count(), gaps.len()),
        users_gap_below_hour: frac(gaps.iter().filter(|&&g| g < 3_600.0).count(), gaps.len()),
        movies_below_10_ratings: frac(movie_counts.iter().filter(|&&c| c < 10).count(), movie_counts.len()),
        movies_below_100_ratings: frac(movie_counts.iter().filter(|&&c| c < 100).count(), movie_counts.len()),
        top10_movie_share: top10 as f64 / total as f64,
        rating_value_counts,
        inter_rating_time: Histogram::from_values(&GAP_BIN_EDGES_SECONDS, gaps.iter().copied()),
        ratings_per_user: Histogram::from_values(&COUNT_BIN_EDGES, user_counts.iter().map(|&c| c as f64)),
        ratings_per_movie: Histogram::from_values(&COUNT_BIN_EDGES, movie_counts.iter().map(|&c| c as f64)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(user_id: u32, movie_id: u32, rating: f64, timestamp: i64) -> Interaction {
        Interaction {
            user_id,
            movie_id,
            rating,
            timestamp,
        }
    }

    #[test]
    fn single_user_gap() {
        let s = dataset_stats(&[it(0, 0, 4.0, 0), it(0, 1, 3.0, 60)]).unwrap();
        assert_eq!(s.mean_inter_rating_seconds, 60.0);
        assert_eq!(s.users, 1);
        assert_eq!(s.interactions, 2);
        assert_eq!(s.mean_ratings_per_user, 2.0);
        assert_eq!(s.inter_rating_time.counts[1], 1);
        assert_eq!(s.users_gap_below_minute, 0.0);
        assert_eq!(s.users_gap_below_hour, 1.0);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(dataset_stats(&[]).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = Histogram::from_values(&COUNT_BIN_EDGES, [1.0, 9.0, 10.0, 99.0, 5e6]);
        assert_eq!(h.counts, vec![2, 2, 0, 0, 0, 1]);
    }
}
