use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedq_core::data::{decode_partition, decode_watch_histories};
use fedq_runner::ExperimentConfig;
use serde_json::Value;

fn fedq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedq"))
        .args(args)
        .env_remove("FQS_OUT_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn err(out: &Output) -> String {
    assert!(
        !out.status.success(),
        "unexpected success: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Small synthetic experiment that trains in well under a second.
fn small_config(dir: &Path) -> PathBuf {
    let cfg = serde_json::json!({
        "name": "small",
        "data": { "source": { "kind": "synthetic", "num_users": 80, "num_movies": 40 } },
        "federation": { "rounds": 4, "clients_per_round": 8, "queue_length": 4 },
        "compression": { "sweep": [-48, -38, -30, -24, -10] }
    });
    let path = dir.join("small.json");
    fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stats_on_two_interaction_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let movies = dir.path().join("movies.csv");
    fs::write(&ratings, "userId,movieId,rating,timestamp\n1,5,4.0,100\n1,7,2.5,160\n").unwrap();
    fs::write(&movies, "movieId,title,genres\n5,A,Drama\n7,B,Comedy|Drama\n").unwrap();
    let cfg = serde_json::json!({
        "data": { "source": { "kind": "movielens", "ratings": ratings, "movies": movies } }
    });
    let path = dir.path().join("c.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let stats: Value = serde_json::from_str(&ok(&fedq(&["stats", "--config", s(&path)]))).unwrap();
    assert_eq!(stats["interactions"], 2);
    assert_eq!(stats["users"], 1);
    assert_eq!(stats["movies"], 2);
    assert_eq!(stats["mean_inter_rating_seconds"], 60.0);
}

#[test]
fn invalid_inputs_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let e = err(&fedq(&[
        "stats",
        "--config",
        s(&cfg),
        "--override",
        "federation.queue_lenght=5",
    ]));
    assert!(e.contains("federation.queue_lenght"), "{e}");
    let e = err(&fedq(&[
        "train-federated",
        "--config",
        s(&cfg),
        "--override",
        "federation.queue_length=3",
    ]));
    assert!(e.contains("federation.queue_length"), "{e}");
    let e = err(&fedq(&["stats", "--config", s(&dir.path().join("missing.json"))]));
    assert!(e.contains("missing.json"), "{e}");
    err(&fedq(&["stats", "--no-such-flag"]));
    let e = err(&fedq(&["stats", "--override", "data.train_fraction=1.5"]));
    assert!(e.contains("data.train_fraction"), "{e}");
    fs::write(dir.path().join("typo.json"), r#"{"federaton": {}}"#).unwrap();
    let e = err(&fedq(&["stats", "--config", s(&dir.path().join("typo.json"))]));
    assert!(e.contains("federaton"), "{e}");
}

#[test]
fn train_federated_is_byte_deterministic_and_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for out in &runs {
        ok(&fedq(&[
            "train-federated",
            "--config",
            s(&cfg),
            "--seed",
            "7",
            "--out",
            s(out),
        ]));
    }
    let metrics: Vec<Vec<u8>> = runs
        .iter()
        .map(|r| fs::read(r.join("metrics.jsonl")).unwrap())
        .collect();
    assert_eq!(metrics[0], metrics[1]);
    assert_eq!(
        fs::read(runs[0].join("model.fqs")).unwrap(),
        fs::read(runs[1].join("model.fqs")).unwrap()
    );
    assert_eq!(String::from_utf8_lossy(&metrics[0]).lines().count(), 5);
    assert!(!String::from_utf8_lossy(&metrics[0]).contains("wall"));
    assert_eq!(
        fs::read_to_string(runs[0].join("timing.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );

    let resolved: ExperimentConfig = serde_json::from_slice(&fs::read(runs[0].join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved.master_seed, 7);
    assert_eq!(resolved.federation.seed, 7);
    let text = fs::read_to_string(runs[0].join("config.json")).unwrap();
    assert!(text.contains("eval_batch_size") && text.contains("per_tensor_qp_offset"));

    let other = dir.path().join("c");
    ok(&fedq(&[
        "train-federated",
        "--config",
        s(&cfg),
        "--seed",
        "8",
        "--out",
        s(&other),
    ]));
    assert_ne!(fs::read(other.join("metrics.jsonl")).unwrap(), metrics[0]);
}

#[test]
fn default_output_directory_uses_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_fedq"))
        .args(["prepare-data", "--config", s(&cfg), "--seed", "3"])
        .env("FQS_OUT_DIR", dir.path().join("root"))
        .output()
        .unwrap();
    ok(&out);
    let run = dir.path().join("root").join("small-seed3");
    let train = decode_watch_histories(&fs::read(run.join("train.fqd")).unwrap()).unwrap();
    let partition = decode_partition(&fs::read(run.join("partition.fqp")).unwrap()).unwrap();
    partition.validate(train.len()).unwrap();
    assert!(run.join("stats.json").is_file() && run.join("validation.fqd").is_file());
}

#[test]
fn compress_eval_sweep_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    ok(&fedq(&["train-federated", "--config", s(&cfg), "--out", s(&out)]));
    ok(&fedq(&["compress-eval", "--config", s(&cfg), "--out", s(&out)]));
    let lines: Vec<Value> = fs::read_to_string(out.join("sweep.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 5);
    let bytes: Vec<u64> = lines.iter().map(|l| l["bytes"].as_u64().unwrap()).collect();
    assert!(bytes.windows(2).all(|w| w[1] <= w[0]), "{bytes:?}");
    for l in &lines {
        let saving = l["space_saving"].as_f64().unwrap();
        let expected = 1.0 - l["bytes"].as_f64().unwrap() / l["uncompressed_bytes"].as_f64().unwrap();
        assert_eq!(saving, expected);
    }
}

#[test]
fn report_over_runs_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("run-a"), dir.path().join("run-b"));
    ok(&fedq(&["train-federated", "--config", s(&cfg), "--out", s(&a)]));
    ok(&fedq(&[
        "train-federated",
        "--config",
        s(&cfg),
        "--seed",
        "1",
        "--out",
        s(&b),
    ]));
    let rep = dir.path().join("report");
    let summary = ok(&fedq(&["report", s(&a), s(&b), "--out", s(&rep)]));
    assert!(summary.contains("run-a") && summary.contains("run-b"));
    let csv = fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "run_id,round,metric,value");
    let ids: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids.into_iter().collect::<Vec<_>>(), vec!["run-a", "run-b"]);

    ok(&fedq(&["compress-eval", "--config", s(&cfg), "--out", s(&a)]));
    let e = err(&fedq(&[
        "report",
        s(&a.join("metrics.jsonl")),
        s(&a.join("sweep.jsonl")),
        "--out",
        s(&rep),
    ]));
    assert!(e.contains("cannot mix"), "{e}");
    ok(&fedq(&["report", s(&a.join("sweep.jsonl")), "--out", s(&rep)]));
    assert!(fs::read_to_string(rep.join("report.csv"))
        .unwrap()
        .starts_with("run_id,qp,metric,value\n"));
}

#[test]
fn train_central_accepts_batch_norm_and_federated_rejects_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("central");
    let bn = "model.candidate_generator.norm=\"batch_norm\"";
    ok(&fedq(&[
        "train-central",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--override",
        bn,
        "--override",
        "central.epochs=2",
    ]));
    assert_eq!(
        fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count(),
        3
    );
    assert!(out.join("running_stats.fqs").is_file());
    ok(&fedq(&[
        "compress-eval",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--override",
        bn,
    ]));
    let e = err(&fedq(&[
        "train-federated",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--override",
        bn,
    ]));
    assert!(e.contains("group norm"), "{e}");
}
