use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{rating_to_class, Interaction, MovieMeta, OrderingMode, RatingSample, WatchHistorySample};
use crate::error::{Error, Result};

/// Sorts one user's interactions according to `mode`. Sorts are stable, so
/// ties keep their input order.
pub fn order_user_history<R: Rng + ?Sized>(items: &mut [&Interaction], mode: OrderingMode, rng: &mut R) {
    match mode {
        OrderingMode::TimestampAsc => items.sort_by_key(|i| i.timestamp),
        OrderingMode::TimestampDesc => items.sort_by_key(|i| std::cmp::Reverse(i.timestamp)),
        OrderingMode::RatingAsc => {
            items.sort_by(|a, b| a.rating.total_cmp(&b.rating).then(a.timestamp.cmp(&b.timestamp)))
        }
        OrderingMode::RatingDesc => {
            items.sort_by(|a, b| b.rating.total_cmp(&a.rating).then(a.timestamp.cmp(&b.timestamp)))
        }
        OrderingMode::Random => items.shuffle(rng),
    }
}

fn group_by_user(interactions: &[Interaction]) -> BTreeMap<u32, Vec<&Interaction>> {
    let mut users: BTreeMap<u32, Vec<&Interaction>> = BTreeMap::new();
    for it in interactions {
        users.entry(it.user_id).or_default().push(it);
    }
    users
}

/// Sliding-window next-watch samples. For a user with `n` ordered watches the
/// target at position `i` (0-based, `i ≥ 1`) gets the preceding
/// `min(window, i)` watches as history, so every watch after the first is a
/// target exactly once. Users are processed in ascending id order.
pub fn build_watch_histories<R: Rng + ?Sized>(
    interactions: &[Interaction],
    window: usize,
    ordering: OrderingMode,
    rng: &mut R,
) -> Result<Vec<WatchHistorySample>> {
    if window == 0 {
        return Err(Error::config("window must be >= 1"));
    }
    let mut out = Vec::new();
    for (user, mut items) in group_by_user(interactions) {
        order_user_history(&mut items, ordering, rng);
        for i in 1..items.len() {
            let start = i.saturating_sub(window);
            out.push(WatchHistorySample {
                user_id: user,
                history: items[start..i].iter().map(|it| it.movie_id).collect(),
                target: items[i].movie_id,
            });
        }
    }
    Ok(out)
}

/// One rating sample per interaction, in input order. Movie age is
/// `reference_year − release_year` mapped linearly so that the oldest
/// referenced movie is 1 and the newest −1.
pub fn build_rating_samples(
    interactions: &[Interaction],
    movies: &[MovieMeta],
    use_movie_age: bool,
    reference_year: i32,
) -> Result<Vec<RatingSample>> {
    let meta = |id: u32| -> Result<&MovieMeta> {
        movies
            .get(id as usize)
            .filter(|m| m.movie_id == id)
            .ok_or_else(|| Error::data(format!("movie {id} has no metadata")))
    };
    let (mut min_age, mut max_age) = (i64::MAX, i64::MIN);
    if use_movie_age {
        for it in interactions {
            let m = meta(it.movie_id)?;
            let year = m
                .release_year
                .ok_or_else(|| Error::data(format!("movie {} has no release year", it.movie_id)))?;
            let age = i64::from(reference_year) - i64::from(year);
            min_age = min_age.min(age);
            max_age = max_age.max(age);
        }
    }
    interactions
        .iter()
        .map(|it| {
            let m = meta(it.movie_id)?;
            if m.genre_ids.is_empty() {
                return Err(Error::data(format!("movie {} has an empty genre list", it.movie_id)));
            }
            let rating_class = rating_to_class(it.rating)
                .ok_or_else(|| Error::data(format!("rating {} is not on the 0.5 grid", it.rating)))?;
            let movie_age = if use_movie_age && max_age > min_age {
                let age = i64::from(reference_year) - i64::from(m.release_year.expect("checked above"));
                2.0 * (age - min_age) as f64 / (max_age - min_age) as f64 - 1.0
            } else {
                0.0
            };
            Ok(RatingSample {
                user_id: it.user_id,
                movie_id: it.movie_id,
                genre_ids: m.genre_ids.clone(),
                movie_age,
                rating_class,
            })
        })
        .collect()
}
