use fedq_core::data::{RatingSample, WatchHistorySample};
use fedq_core::models::{
    build_candidate_generator, build_ranker, candidate_generator_spec, in_top_k, predict_top_k, ranker_spec,
    CandidateGeneratorConfig, Example, NormKind, RankerConfig,
};
use fedq_core::nn::{forward, softmax_rows, LayerSpec, Phase};
use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn full_scale_candidate_generator_count() {
    let spec = candidate_generator_spec(&CandidateGeneratorConfig::default()).unwrap();
    assert_eq!(spec.parameter_count(), 17_994_852);
    let bn = CandidateGeneratorConfig {
        norm: NormKind::BatchNorm,
        ..CandidateGeneratorConfig::default()
    };
    assert_eq!(candidate_generator_spec(&bn).unwrap().parameter_count(), 17_994_852);
}

#[test]
fn full_scale_ranker_count_and_first_layer() {
    let spec = ranker_spec(&RankerConfig::default()).unwrap();
    assert_eq!(spec.parameter_count(), 12_136_170);
    let first = spec.parameter_shapes().iter().find(|(n, _)| n == "fc0.weight").unwrap();
    assert_eq!(first.1, vec![256, 177]);
}

#[test]
fn desk_count_matches_hand_sum() {
    let c = CandidateGeneratorConfig {
        input_vocab_size: 201,
        output_vocab_size: 200,
        embedding_dim: 8,
        hidden_sizes: vec![32, 16, 8],
        norm: NormKind::GroupNorm { groups: 4 },
    };
    let hand = 201 * 8 + (8 * 32 + 32) + 2 * 32 + (32 * 16 + 16) + 2 * 16 + (16 * 8 + 8) + 2 * 8 + (8 * 200 + 200);
    let (spec, params) = build_candidate_generator(&c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(spec.parameter_count(), hand);
    assert_eq!(params.scalar_count(), hand);
    let layers = spec.layers();
    assert!(matches!(
        layers[0],
        LayerSpec::Embedding {
            vocab_size: 201,
            dim: 8
        }
    ));
    assert_eq!(layers[1], LayerSpec::MeanPoolOverSequence);
}

fn desk_cg() -> CandidateGeneratorConfig {
    CandidateGeneratorConfig {
        input_vocab_size: 31,
        output_vocab_size: 30,
        embedding_dim: 6,
        hidden_sizes: vec![8, 4],
        norm: NormKind::GroupNorm { groups: 2 },
    }
}

#[test]
fn padding_leaves_logits_unchanged() {
    let (spec, params) = build_candidate_generator(&desk_cg(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let a = WatchHistorySample {
        user_id: 0,
        history: vec![3, 7, 7],
        target: 2,
    };
    let short = WatchHistorySample {
        user_id: 1,
        history: vec![4],
        target: 2,
    };
    let alone = WatchHistorySample::to_batch(&spec, &[&a]).unwrap();
    let padded = WatchHistorySample::to_batch(&spec, &[&a, &short]).unwrap();
    let la = forward(&spec, &params, &alone, Phase::Train).unwrap().into_logits();
    let lp = forward(&spec, &params, &padded, Phase::Train).unwrap().into_logits();
    assert_eq!(la.row(0), lp.row(0));
}

#[test]
fn outputs_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (spec, params) = build_candidate_generator(&desk_cg(), &mut rng).unwrap();
    let samples: Vec<WatchHistorySample> = (0..16)
        .map(|u| WatchHistorySample {
            user_id: u,
            history: (0..rng.random_range(1..6)).map(|_| rng.random_range(0..30)).collect(),
            target: rng.random_range(0..30),
        })
        .collect();
    let refs: Vec<&WatchHistorySample> = samples.iter().collect();
    let logits = forward(
        &spec,
        &params,
        &WatchHistorySample::to_batch(&spec, &refs).unwrap(),
        Phase::Train,
    )
    .unwrap()
    .into_logits();
    for row in softmax_rows(&logits).rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }

    let rc = RankerConfig {
        num_users: 10,
        num_movies: 12,
        num_genres: 4,
        user_dim: 3,
        movie_dim: 4,
        genre_dim: 2,
        hidden_sizes: vec![6],
        norm: NormKind::GroupNorm { groups: 3 },
        ..RankerConfig::default()
    };
    let (spec, params) = build_ranker(&rc, &mut rng).unwrap();
    let r = RatingSample {
        user_id: 3,
        movie_id: 11,
        genre_ids: vec![0, 3],
        movie_age: -0.5,
        rating_class: 7,
    };
    let logits = forward(
        &spec,
        &params,
        &RatingSample::to_batch(&spec, &[&r, &r]).unwrap(),
        Phase::Train,
    )
    .unwrap()
    .into_logits();
    assert_eq!(logits.ncols(), 10);
    for row in softmax_rows(&logits).rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn top_k_membership_matches_full_sort(
        logits in proptest::collection::vec(-3i32..3, 2..40),
        k in 1usize..40,
        class_seed in 0usize..1000,
    ) {
        let logits = Array1::from(logits.into_iter().map(f64::from).collect::<Vec<_>>());
        let n = logits.len();
        let k = k.min(n);
        let class = class_seed % n;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
        let top = predict_top_k(logits.view(), k).unwrap();
        prop_assert_eq!(&top[..], &order[..k]);
        prop_assert_eq!(in_top_k(logits.view(), class, k), order[..k].contains(&class));
    }
}
