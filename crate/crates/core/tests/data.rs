use std::collections::{BTreeMap, HashMap, HashSet};

use fedq_core::data::{
    build_rating_samples, build_watch_histories, dataset_stats, decode_partition, decode_watch_histories,
    encode_partition, encode_watch_histories, generate_synthetic, load_interactions, partition_by_user, partition_iid,
    train_val_split, EmbeddingIds, OrderingMode, SyntheticConfig, COUNT_BIN_EDGES, GAP_BIN_EDGES_SECONDS,
};
use fedq_core::rng::{self, streams};
use fedq_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic(seed: u64) -> fedq_core::data::SyntheticCorpus {
    generate_synthetic(&SyntheticConfig {
        num_users: 300,
        num_movies: 120,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

#[test]
fn two_row_csv() {
    let ratings = "userId,movieId,rating,timestamp\n10,5,4.0,100\n3,7,2.5,90\n";
    let movies = "movieId,title,genres,releaseYear\n5,A,Drama|Comedy,1999\n7,B,(no genres listed),2001\n";
    let corpus = load_interactions(ratings.as_bytes(), movies.as_bytes()).unwrap();
    assert_eq!(corpus.interactions.len(), 2);
    assert_eq!(corpus.num_users(), 2);
    assert_eq!(corpus.maps.users, vec![3, 10]);
    assert_eq!(corpus.interactions[0].user_id, 1);
    assert_eq!(corpus.interactions[0].movie_id, 0);
    assert_eq!(corpus.movies[1].release_year, Some(2001));
}

#[test]
fn off_grid_rating_and_unknown_movie_are_rejected() {
    let movies = "movieId,title,genres\n5,A,Drama\n";
    let bad = "userId,movieId,rating,timestamp\n1,5,3.7,1\n";
    match load_interactions(bad.as_bytes(), movies.as_bytes()) {
        Err(Error::Data(msg)) => assert!(msg.contains("line 2"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let unknown = "userId,movieId,rating,timestamp\n1,6,3.5,1\n";
    assert!(matches!(
        load_interactions(unknown.as_bytes(), movies.as_bytes()),
        Err(Error::Data(_))
    ));
}

#[test]
fn stats_match_recount() {
    let s = synthetic(1);
    let its = &s.corpus.interactions;
    let stats = dataset_stats(its).unwrap();

    let mut per_user: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    let mut per_movie: BTreeMap<u32, u64> = BTreeMap::new();
    let mut values = [0u64; 10];
    for it in its {
        per_user.entry(it.user_id).or_default().push(it.timestamp);
        *per_movie.entry(it.movie_id).or_default() += 1;
        values[(it.rating * 2.0) as usize - 1] += 1;
    }
    assert_eq!(stats.rating_value_counts, values);
    assert_eq!(stats.mean_ratings_per_user, its.len() as f64 / per_user.len() as f64);

    let bin = |edges: &[f64], v: f64| edges.iter().rposition(|&e| v >= e).unwrap_or(0);
    let mut user_hist = vec![0u64; COUNT_BIN_EDGES.len()];
    let mut gap_hist = vec![0u64; GAP_BIN_EDGES_SECONDS.len()];
    for ts in per_user.values() {
        user_hist[bin(&COUNT_BIN_EDGES, ts.len() as f64)] += 1;
        if ts.len() > 1 {
            let mut sorted = ts.clone();
            sorted.sort_unstable();
            let gaps: Vec<f64> = sorted.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
            gap_hist[bin(&GAP_BIN_EDGES_SECONDS, gaps.iter().sum::<f64>() / gaps.len() as f64)] += 1;
        }
    }
    let mut movie_hist = vec![0u64; COUNT_BIN_EDGES.len()];
    for &c in per_movie.values() {
        movie_hist[bin(&COUNT_BIN_EDGES, c as f64)] += 1;
    }
    assert_eq!(stats.ratings_per_user.counts, user_hist);
    assert_eq!(stats.ratings_per_movie.counts, movie_hist);
    assert_eq!(stats.inter_rating_time.counts, gap_hist);
}

#[test]
fn watch_history_count_matches_recount() {
    let s = synthetic(2);
    let mut per_user: HashMap<u32, usize> = HashMap::new();
    for it in &s.corpus.interactions {
        *per_user.entry(it.user_id).or_default() += 1;
    }
    let expected: usize = per_user.values().map(|&n| n.saturating_sub(1)).sum();
    let mut rng = rng::stream(2, streams::ORDERING);
    for mode in [
        OrderingMode::TimestampAsc,
        OrderingMode::Random,
        OrderingMode::RatingDesc,
    ] {
        let samples = build_watch_histories(&s.corpus.interactions, 7, mode, &mut rng).unwrap();
        assert_eq!(samples.len(), expected);
        assert!(samples.iter().all(|x| (1..=7).contains(&x.history.len())));
    }
}

#[test]
fn timestamp_ordering_is_idempotent() {
    let s = synthetic(3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let once = build_watch_histories(&s.corpus.interactions, 5, OrderingMode::TimestampAsc, &mut rng).unwrap();
    let mut shuffled = s.corpus.interactions.clone();
    shuffled.reverse();
    let again = build_watch_histories(&shuffled, 5, OrderingMode::TimestampAsc, &mut rng).unwrap();
    assert_eq!(once, again);
}

#[test]
fn movie_age_mid_range_matches_affine_recompute() {
    let s = synthetic(4);
    let samples = build_rating_samples(&s.corpus.interactions, &s.corpus.movies, true, 2024).unwrap();
    assert_eq!(samples.len(), s.corpus.interactions.len());
    let ages: Vec<f64> = s
        .corpus
        .interactions
        .iter()
        .map(|it| f64::from(2024 - s.corpus.movies[it.movie_id as usize].release_year.unwrap()))
        .collect();
    let (lo, hi) = ages
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    for (sample, age) in samples.iter().zip(&ages) {
        let expected = (age - lo) / (hi - lo) * 2.0 - 1.0;
        assert!((sample.movie_age - expected).abs() < 1e-12);
    }
}

/// Pearson χ² statistic of a contingency table.
fn chi_square(table: &[Vec<f64>]) -> f64 {
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..table[0].len()).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let total: f64 = rows.iter().sum();
    let mut chi = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &obs) in r.iter().enumerate() {
            let e = rows[i] * cols[j] / total;
            if e > 0.0 {
                chi += (obs - e).powi(2) / e;
            }
        }
    }
    chi
}

#[test]
fn clusters_differ_more_than_users_within_a_cluster() {
    let s = generate_synthetic(&SyntheticConfig {
        num_users: 400,
        num_movies: 200,
        num_genres: 10,
        cluster_count: 4,
        seed: 9,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let genre_counts = |users: &dyn Fn(u32) -> Option<usize>, groups: usize| {
        let mut t = vec![vec![0.0; 10]; groups];
        for it in &s.corpus.interactions {
            if let Some(g) = users(it.user_id) {
                for &genre in &s.corpus.movies[it.movie_id as usize].genre_ids {
                    t[g][genre as usize] += 1.0;
                }
            }
        }
        t
    };
    let clusters = &s.user_clusters;
    let between = chi_square(&genre_counts(&|u| Some(clusters[u as usize] as usize), 4));
    // Four pseudo-groups drawn from inside cluster 0.
    let members: Vec<u32> = (0..400u32).filter(|&u| clusters[u as usize] == 0).collect();
    let within = chi_square(&genre_counts(
        &|u| members.iter().position(|&m| m == u).map(|p| p % 4),
        4,
    ));
    let dof = 3.0 * 9.0;
    assert!(
        between / dof > 5.0 * (within / dof).max(1.0),
        "between {between}, within {within}"
    );
}

#[test]
fn single_cluster_is_iid() {
    let s = generate_synthetic(&SyntheticConfig {
        cluster_count: 1,
        num_users: 50,
        num_movies: 40,
        ..SyntheticConfig::default()
    })
    .unwrap();
    assert!(s.user_clusters.iter().all(|&c| c == 0));
}

#[test]
fn split_keeps_all_history_ids_in_training() {
    let s = synthetic(5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples = build_watch_histories(&s.corpus.interactions, 7, OrderingMode::TimestampAsc, &mut rng).unwrap();
    let total = samples.len();
    let mut all = HashSet::new();
    let mut ids = Vec::new();
    for x in &samples {
        ids.clear();
        x.embedding_ids(&mut ids);
        all.extend(ids.iter().copied());
    }
    let mut split_rng = rng::stream(5, streams::SPLIT);
    let (train, val) = train_val_split(samples, 0.9, &mut split_rng).unwrap();
    assert_eq!(train.len() + val.len(), total);
    let mut covered = HashSet::new();
    for x in &train {
        ids.clear();
        x.embedding_ids(&mut ids);
        covered.extend(ids.iter().copied());
    }
    assert_eq!(covered, all);
    assert!(train_val_split(train, 1.0, &mut split_rng).is_err());
}

#[test]
fn per_user_partition() {
    let s = synthetic(6);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples = build_watch_histories(&s.corpus.interactions, 7, OrderingMode::TimestampAsc, &mut rng).unwrap();
    let p = partition_by_user(&samples).unwrap();
    p.validate(samples.len()).unwrap();
    assert_eq!(p.sizes().iter().sum::<usize>(), samples.len());
    for c in &p.clients {
        assert!(c.iter().all(|&i| samples[i].user_id == samples[c[0]].user_id));
    }
    assert_eq!(decode_partition(&encode_partition(&p)).unwrap(), p);
    assert_eq!(
        decode_watch_histories(&encode_watch_histories(&samples)).unwrap(),
        samples
    );
}

#[test]
fn two_users_give_two_clients() {
    let samples: Vec<fedq_core::data::WatchHistorySample> = [(0u32, 3usize), (1, 7)]
        .iter()
        .flat_map(|&(u, n)| {
            (0..n).map(move |_| fedq_core::data::WatchHistorySample {
                user_id: u,
                history: vec![0],
                target: 0,
            })
        })
        .collect();
    assert_eq!(partition_by_user(&samples).unwrap().sizes(), vec![3, 7]);
}

proptest! {
    #[test]
    fn iid_partition_is_a_disjoint_cover(n in 1usize..300, k in 1usize..50, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match partition_iid(n, k, &mut rng) {
            Ok(p) => {
                prop_assert!(k <= n);
                let mut union: Vec<usize> = p.clients.iter().flatten().copied().collect();
                union.sort_unstable();
                prop_assert_eq!(union, (0..n).collect::<Vec<_>>());
                let sizes = p.sizes();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
            Err(e) => {
                prop_assert!(k > n);
                prop_assert!(matches!(e, Error::Config(_)));
            }
        }
    }
}
