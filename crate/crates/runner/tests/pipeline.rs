use std::fs;

use fedq_core::data::SyntheticConfig;
use fedq_core::federation::Algorithm;
use fedq_core::models::{evaluate, NormKind};
use fedq_core::nn::LossKind;
use fedq_runner::pipeline::{
    build_model, prepare, run_central, run_federated, train_federated_to_dir, FederatedOptions, MetricLine, Samples,
    METRICS_FILE, MODEL_FILE,
};
use fedq_runner::{overrides, report, DataSource, ExperimentConfig, ModelKind, PartitionConfig};

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        master_seed: seed,
        ..ExperimentConfig::default()
    };
    cfg.data.source = DataSource::Synthetic(SyntheticConfig {
        num_users: 80,
        num_movies: 40,
        ..SyntheticConfig::default()
    });
    cfg.federation.rounds = 5;
    cfg.federation.clients_per_round = 8;
    cfg.federation.queue_length = 4;
    cfg.resolve().unwrap()
}

#[test]
fn resolve_propagates_seed_and_metrics() {
    let mut cfg = ExperimentConfig {
        master_seed: 9,
        ..ExperimentConfig::default()
    };
    cfg.metrics.top_k = 5;
    cfg.metrics.eval_every = 3;
    let cfg = cfg.resolve().unwrap();
    assert_eq!(cfg.federation.seed, 9);
    assert_eq!(cfg.federation.top_k, 5);
    assert_eq!(cfg.federation.eval_every, 3);
    match cfg.data.source {
        DataSource::Synthetic(s) => assert_eq!(s.seed, 9),
        _ => unreachable!(),
    }
}

#[test]
fn overrides_reach_nested_fields() {
    let cfg = overrides::apply(
        &ExperimentConfig::default(),
        &[
            "federation.algorithm=fed_avg".into(),
            "data.partition={\"kind\":\"iid\",\"num_clients\":50}".into(),
            "compression.sweep.0=-40".into(),
            "name=exp".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.federation.algorithm, Algorithm::FedAvg);
    assert_eq!(cfg.data.partition, PartitionConfig::Iid { num_clients: 50 });
    assert_eq!(cfg.compression.sweep[0], -40);
    assert_eq!(cfg.name, "exp");
    assert!(overrides::apply(&ExperimentConfig::default(), &["federation".into()]).is_err());
    assert!(overrides::apply(&ExperimentConfig::default(), &["federation.rounds=abc".into()]).is_err());
}

#[test]
fn one_central_epoch_lowers_training_loss() {
    let dir = tempfile::tempdir().unwrap();
    let ratings: String = std::iter::once("userId,movieId,rating,timestamp".to_string())
        .chain((0..12).map(|i| format!("{},{},4.0,{}", 1 + i / 6, 1 + i % 4, 100 + i)))
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("r.csv"), ratings).unwrap();
    fs::write(
        dir.path().join("m.csv"),
        "movieId,title,genres\n1,A,Drama\n2,B,Drama\n3,C,Comedy\n4,D,Comedy\n",
    )
    .unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.data.source = DataSource::Movielens {
        ratings: dir.path().join("r.csv"),
        movies: dir.path().join("m.csv"),
        release_years: None,
    };
    cfg.data.train_fraction = 0.8;
    cfg.central.epochs = 1;
    cfg.central.batch_size = 2;
    let cfg = cfg.resolve().unwrap();
    let prepared = prepare(&cfg).unwrap();
    assert_eq!(prepared.train.len() + prepared.validation.len(), 10);
    let (spec, init) = build_model(&cfg, &prepared.corpus).unwrap();
    let run = run_central(&cfg, &prepared, |_| Ok(())).unwrap();
    let Samples::Watch(train) = &prepared.train else {
        unreachable!()
    };
    let loss = |p| {
        evaluate(&spec, p, None, train, LossKind::SoftmaxCrossEntropy, 3, 64)
            .unwrap()
            .loss
    };
    let (before, after) = (loss(&init), loss(&run.params));
    assert!(after.is_finite() && after < before, "{before} -> {after}");
    assert_eq!(run.history.len(), 2);
    assert_eq!(run.history[1].local_steps, prepared.train.len().div_ceil(2) as u64);
}

#[test]
fn batch_norm_central_updates_running_statistics() {
    let mut cfg = small(0);
    cfg.model.candidate_generator.norm = NormKind::BatchNorm;
    cfg.central.epochs = 1;
    let prepared = prepare(&cfg).unwrap();
    let run = run_central(&cfg, &prepared, |_| Ok(())).unwrap();
    let running = run.running.unwrap();
    assert_ne!(running, run.spec.init_running_stats());
    assert!(run_federated(&cfg, &prepared, None, |_, _| Ok(true)).is_err());
}

#[test]
fn interrupted_run_resumes_to_identical_outputs() {
    let cfg = small(3);
    let dir = tempfile::tempdir().unwrap();
    let (full, split) = (dir.path().join("full"), dir.path().join("split"));
    train_federated_to_dir(&cfg, &full, FederatedOptions::default()).unwrap();
    let first = FederatedOptions {
        checkpoint_every: 1,
        resume: false,
        stop_after: Some(2),
    };
    train_federated_to_dir(&cfg, &split, first).unwrap();
    assert_eq!(fs::read_to_string(split.join(METRICS_FILE)).unwrap().lines().count(), 3);
    let resume = FederatedOptions {
        checkpoint_every: 1,
        resume: true,
        stop_after: None,
    };
    train_federated_to_dir(&cfg, &split, resume).unwrap();
    assert_eq!(
        fs::read(full.join(METRICS_FILE)).unwrap(),
        fs::read(split.join(METRICS_FILE)).unwrap()
    );
    assert_eq!(
        fs::read(full.join(MODEL_FILE)).unwrap(),
        fs::read(split.join(MODEL_FILE)).unwrap()
    );
}

#[test]
fn ranker_runs_report_rating_error() {
    let mut cfg = small(1);
    cfg.model.kind = ModelKind::Ranker;
    cfg.federation.loss = LossKind::SumOfBoth;
    cfg.metrics.top_k = 3;
    let cfg = cfg.resolve().unwrap();
    let prepared = prepare(&cfg).unwrap();
    let run = run_federated(&cfg, &prepared, None, |_, _| Ok(true)).unwrap();
    let last = MetricLine::from_federated(run.state.history.last().unwrap());
    assert!(last.mse.unwrap() >= 0.0);
    assert!((0.0..=1.0).contains(&last.accuracy.unwrap()));
    assert_eq!(last.algorithm.as_deref(), Some("fed_q"));
    assert_eq!(run.peak_resident_clients, 1);
}

#[test]
fn report_rows_and_final_values_match_raw_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small(2);
    train_federated_to_dir(&cfg, &out, FederatedOptions::default()).unwrap();
    let raw: Vec<serde_json::Value> = fs::read_to_string(out.join(METRICS_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let numeric = |v: &serde_json::Value| {
        v.as_object()
            .unwrap()
            .iter()
            .filter(|(k, x)| !["kind", "round", "algorithm"].contains(&k.as_str()) && x.is_number())
            .count()
    };
    let per_round = numeric(&raw[1]);
    assert!(raw[1..].iter().all(|l| numeric(l) == per_round));
    let rep = report::load(&[out.join(METRICS_FILE)]).unwrap();
    assert_eq!(rep.rows.len(), cfg.federation.rounds * per_round + numeric(&raw[0]));
    let finals = &rep.final_values()["run"];
    let last = raw.last().unwrap();
    for (metric, (round, value)) in finals {
        if last[metric.as_str()].is_number() {
            assert_eq!(*round as usize, cfg.federation.rounds);
            assert_eq!(*value, last[metric.as_str()].as_f64().unwrap(), "{metric}");
        }
    }
    assert!(rep.summary().contains("top_k_accuracy"));
}
