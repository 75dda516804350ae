use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Corpus, IdMaps, Interaction, MovieMeta};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Knobs for the synthetic corpus. Users belong to preference clusters that
/// boost a subset of genres; movie popularity follows a Zipf law; per-user
/// interaction counts are log-normal. Each movie has a few "follow-up"
/// movies, and a user's next watch continues from the previous one with
/// probability `follow_probability`, which gives histories a temporal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_movies: usize,
    pub num_genres: usize,
    pub cluster_count: usize,
    /// Parameters of the underlying normal of the per-user count.
    pub samples_mu: f64,
    pub samples_sigma: f64,
    pub zipf_s: f64,
    pub seed: u64,
    pub min_per_user: usize,
    pub genres_per_cluster: usize,
    pub genre_boost: f64,
    pub follow_ups: usize,
    pub follow_probability: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_users: 2_000,
            num_movies: 500,
            num_genres: 20,
            cluster_count: 8,
            samples_mu: 3.3,
            samples_sigma: 0.6,
            zipf_s: 1.0,
            seed: 0,
            min_per_user: 2,
            genres_per_cluster: 3,
            genre_boost: 10.0,
            follow_ups: 3,
            follow_probability: 0.5,
        }
    }
}

/// Generated corpus plus each user's preference cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub user_clusters: Vec<u32>,
    pub cluster_genres: Vec<Vec<u32>>,
}

struct Cumulative(Vec<f64>);

impl Cumulative {
    fn new(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        Self(
            weights
                .into_iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect(),
        )
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.0.last().expect("non-empty table");
        let x = rng.random::<f64>() * total;
        self.0.partition_point(|&c| c <= x).min(self.0.len() - 1)
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let c = config;
    if c.num_users == 0 || c.num_movies < 2 || c.num_genres == 0 || c.cluster_count == 0 {
        return Err(Error::config(
            "synthetic corpus needs ≥1 user, ≥2 movies, ≥1 genre and ≥1 cluster",
        ));
    }
    if !(c.samples_sigma >= 0.0
        && c.zipf_s >= 0.0
        && c.genre_boost > 0.0
        && (0.0..=1.0).contains(&c.follow_probability))
    {
        return Err(Error::config("invalid synthetic distribution parameters"));
    }
    let mut rng = rng::stream(c.seed, streams::DATA);

    let movies: Vec<MovieMeta> = (0..c.num_movies)
        .map(|m| {
            let primary = rng.random_range(0..c.num_genres) as u32;
            let mut genre_ids = vec![primary];
            if c.num_genres > 1 && rng.random_bool(0.5) {
                let second = rng.random_range(0..c.num_genres) as u32;
                if second != primary {
                    genre_ids.push(second);
                    genre_ids.sort_unstable();
                }
            }
            MovieMeta {
                movie_id: m as u32,
                genre_ids,
                release_year: Some(rng.random_range(1950..=2020)),
            }
        })
        .collect();

    let mut rank: Vec<usize> = (0..c.num_movies).collect();
    rank.shuffle(&mut rng);
    let popularity: Vec<f64> = rank.iter().map(|&r| 1.0 / ((r + 1) as f64).powf(c.zipf_s)).collect();

    let all_genres: Vec<u32> = (0..c.num_genres as u32).collect();
    let cluster_genres: Vec<Vec<u32>> = (0..c.cluster_count)
        .map(|_| {
            let mut g: Vec<u32> = all_genres
                .choose_multiple(&mut rng, c.genres_per_cluster.min(c.num_genres))
                .copied()
                .collect();
            g.sort_unstable();
            g
        })
        .collect();
    let favored = |cluster: usize, m: usize| movies[m].genre_ids.iter().any(|g| cluster_genres[cluster].contains(g));
    let tables: Vec<Cumulative> = (0..c.cluster_count)
        .map(|k| {
            Cumulative::new((0..c.num_movies).map(|m| popularity[m] * if favored(k, m) { c.genre_boost } else { 1.0 }))
        })
        .collect();

    let follow_ups: Vec<Vec<usize>> = (0..c.num_movies)
        .map(|m| {
            let primary = movies[m].genre_ids[0];
            let mut pool: Vec<usize> = (0..c.num_movies)
                .filter(|&o| o != m && movies[o].genre_ids.contains(&primary))
                .collect();
            if pool.len() < c.follow_ups {
                pool = (0..c.num_movies).filter(|&o| o != m).collect();
            }
            pool.choose_multiple(&mut rng, c.follow_ups).copied().collect()
        })
        .collect();

    let counts = LogNormal::new(c.samples_mu, c.samples_sigma).map_err(|e| Error::config(e.to_string()))?;
    let rating_noise = Normal::new(3.4, 0.9).expect("valid normal");

    let mut interactions = Vec::new();
    let mut user_clusters = Vec::with_capacity(c.num_users);
    let mut watched = vec![false; c.num_movies];
    for u in 0..c.num_users {
        let cluster = rng.random_range(0..c.cluster_count);
        user_clusters.push(cluster as u32);
        let n = (counts.sample(&mut rng).round() as usize)
            .max(c.min_per_user)
            .min(c.num_movies);
        watched.fill(false);
        let mut t: i64 = rng.random_range(0..1_000_000_000);
        let mut prev: Option<usize> = None;
        for _ in 0..n {
            let mut pick = None;
            if let Some(p) = prev {
                if rng.random_bool(c.follow_probability) {
                    let options: Vec<usize> = follow_ups[p].iter().copied().filter(|&o| !watched[o]).collect();
                    pick = options.choose(&mut rng).copied();
                }
            }
            let m = match pick {
                Some(m) => m,
                None => {
                    let mut m = tables[cluster].sample(&mut rng);
                    let mut tries = 0;
                    while watched[m] && tries < 64 {
                        m = tables[cluster].sample(&mut rng);
                        tries += 1;
                    }
                    if watched[m] {
                        m = watched.iter().position(|w| !w).expect("n ≤ movie count");
                    }
                    m
                }
            };
            watched[m] = true;
            prev = Some(m);
            t += rng.random_range(1..=3_600);
            let bonus = if favored(cluster, m) { 0.6 } else { 0.0 };
            let raw: f64 = rating_noise.sample(&mut rng) + bonus;
            let rating = ((raw * 2.0).round() / 2.0).clamp(0.5, 5.0);
            interactions.push(Interaction {
                user_id: u as u32,
                movie_id: m as u32,
                rating,
                timestamp: t,
            });
        }
    }

    Ok(SyntheticCorpus {
        corpus: Corpus {
            interactions,
            movies,
            maps: IdMaps {
                users: (0..c.num_users as u64).collect(),
                movies: (0..c.num_movies as u64).collect(),
                genres: (0..c.num_genres).map(|g| format!("genre{g}")).collect(),
            },
        },
        user_clusters,
        cluster_genres,
    })
}
