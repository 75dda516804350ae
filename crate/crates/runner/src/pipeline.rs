//! Experiment stages. Every stage is a pure function of the resolved
//! config; the `*_to_dir` variants also write artifacts.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fedq_core::compression::{
    dequantize_model, encode, quantize_model, space_saving, weight_entropy, CompressionTransport, QuantConfig,
};
use fedq_core::data::{
    apply_release_years, build_rating_samples, build_watch_histories, dataset_stats, encode_partition,
    encode_rating_samples, encode_watch_histories, generate_synthetic, load_corpus, load_release_years,
    partition_by_user, partition_iid, train_val_split, ClientPartition, Corpus, DatasetStats, EmbeddingIds, HasUser,
    RatingSample, WatchHistorySample,
};
use fedq_core::federation::{run_training, IdentityTransport, MetricsRecord, Residency, TrainingState, Transport};
use fedq_core::models::{build_candidate_generator, build_ranker, evaluate, EvalMetrics, Example};
use fedq_core::nn::io::{decode_params_exact, encode_params_exact, load_params, save_params};
use fedq_core::nn::{
    backward, forward, loss_and_grad, sgd_step_in_place, update_running_stats, ModelSpec, ParameterSet, Phase,
};
use fedq_core::rng::{self, streams, RngState};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{DataSource, ExperimentConfig, ModelKind, PartitionConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const MODEL_FILE: &str = "model.fqs";
pub const RUNNING_STATS_FILE: &str = "running_stats.fqs";
pub const SWEEP_FILE: &str = "sweep.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// Samples of the kind the configured model consumes.
#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Watch(Vec<WatchHistorySample>),
    Rating(Vec<RatingSample>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Watch(s) => s.len(),
            Samples::Rating(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn encode(&self) -> Vec<u8> {
        match self {
            Samples::Watch(s) => encode_watch_histories(s),
            Samples::Rating(s) => encode_rating_samples(s),
        }
    }
}

/// Corpus, split and partition for one config.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub train: Samples,
    pub validation: Samples,
    pub partition: ClientPartition,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Corpus> {
    match &cfg.data.source {
        DataSource::Synthetic(s) => Ok(generate_synthetic(s)?.corpus),
        DataSource::Movielens {
            ratings,
            movies,
            release_years,
        } => {
            let mut corpus = load_corpus(ratings, movies)
                .with_context(|| format!("loading {} and {}", ratings.display(), movies.display()))?;
            if let Some(path) = release_years {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                apply_release_years(&mut corpus, &load_release_years(file)?);
            }
            Ok(corpus)
        }
    }
}

pub fn stats(cfg: &ExperimentConfig) -> Result<DatasetStats> {
    Ok(dataset_stats(&load_data(cfg)?.interactions)?)
}

fn split_and_partition<T: EmbeddingIds + HasUser>(
    cfg: &ExperimentConfig,
    samples: Vec<T>,
) -> Result<(Vec<T>, Vec<T>, ClientPartition)> {
    let seed = cfg.master_seed;
    let (train, validation) =
        train_val_split(samples, cfg.data.train_fraction, &mut rng::stream(seed, streams::SPLIT))?;
    let partition = match cfg.data.partition {
        PartitionConfig::PerUser => partition_by_user(&train)?,
        PartitionConfig::Iid { num_clients } => {
            partition_iid(train.len(), num_clients, &mut rng::stream(seed, streams::PARTITION))?
        }
    };
    Ok((train, validation, partition))
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let corpus = load_data(cfg)?;
    let (train, validation, partition) = match cfg.model.kind {
        ModelKind::CandidateGenerator => {
            let samples = build_watch_histories(
                &corpus.interactions,
                cfg.data.window,
                cfg.data.ordering,
                &mut rng::stream(cfg.master_seed, streams::ORDERING),
            )?;
            let (t, v, p) = split_and_partition(cfg, samples)?;
            (Samples::Watch(t), Samples::Watch(v), p)
        }
        ModelKind::Ranker => {
            let samples = build_rating_samples(
                &corpus.interactions,
                &corpus.movies,
                cfg.model.ranker.use_movie_age,
                cfg.data.reference_year,
            )?;
            let (t, v, p) = split_and_partition(cfg, samples)?;
            (Samples::Rating(t), Samples::Rating(v), p)
        }
    };
    Ok(Prepared {
        corpus,
        train,
        validation,
        partition,
    })
}

/// Model spec and initial parameters, drawn from the `init` stream.
pub fn build_model(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<(ModelSpec, ParameterSet)> {
    let mut init = rng::stream(cfg.master_seed, streams::INIT);
    Ok(match cfg.model.kind {
        ModelKind::CandidateGenerator => {
            let mut c = cfg.model.candidate_generator.clone();
            if cfg.model.fit_to_data {
                c.input_vocab_size = corpus.num_movies() + 1;
                c.output_vocab_size = corpus.num_movies();
            }
            build_candidate_generator(&c, &mut init)?
        }
        ModelKind::Ranker => {
            let mut c = cfg.model.ranker.clone();
            if cfg.model.fit_to_data {
                c.num_users = corpus.num_users();
                c.num_movies = corpus.num_movies();
                c.num_genres = corpus.num_genres();
            }
            build_ranker(&c, &mut init)?
        }
    })
}

/// Writes the resolved config, both sample sets, the partition and corpus
/// statistics.
pub fn prepare_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<Prepared> {
    fs::create_dir_all(out)?;
    write_config(cfg, out)?;
    let prepared = prepare(cfg)?;
    fs::write(out.join("train.fqd"), prepared.train.encode())?;
    fs::write(out.join("validation.fqd"), prepared.validation.encode())?;
    fs::write(out.join("partition.fqp"), encode_partition(&prepared.partition))?;
    write_json(&out.join(STATS_FILE), &dataset_stats(&prepared.corpus.interactions)?)?;
    Ok(prepared)
}

/// One validation measurement plus the training loss that preceded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub kind: String,
    /// Communication round, or epoch for central training; 0 is the initial model.
    pub round: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clients: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub queues: Option<usize>,
    pub local_steps: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub critical_path_steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_queue_steps: Option<f64>,
    pub cumulative_steps: u64,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub train_loss: Option<f64>,
    pub val_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub top_k_accuracy: Option<f64>,
    pub mse: Option<f64>,
}

impl MetricLine {
    pub fn from_federated(r: &MetricsRecord) -> Self {
        let v = r.validation.as_ref();
        Self {
            kind: "federated".into(),
            round: r.round,
            algorithm: Some(
                serde_json::to_value(r.algorithm)
                    .ok()
                    .and_then(|a| a.as_str().map(String::from))
                    .unwrap_or_default(),
            ),
            clients: Some(r.clients),
            queues: Some(r.queues),
            local_steps: r.steps.local_gradient_steps_this_round,
            critical_path_steps: Some(r.steps.critical_path_steps),
            mean_queue_steps: Some(r.steps.mean_queue_steps),
            cumulative_steps: r.steps.cumulative,
            bytes_up: r.bytes_up,
            bytes_down: r.bytes_down,
            train_loss: r.train_loss,
            val_loss: v.map(|m| m.loss),
            accuracy: v.map(|m| m.accuracy),
            top_k_accuracy: v.map(|m| m.top_k),
            mse: v.and_then(|m| m.mse),
        }
    }

    fn central(epoch: usize, steps: u64, cumulative: u64, train_loss: Option<f64>, v: &EvalMetrics) -> Self {
        Self {
            kind: "central".into(),
            round: epoch,
            algorithm: None,
            clients: None,
            queues: None,
            local_steps: steps,
            critical_path_steps: None,
            mean_queue_steps: None,
            cumulative_steps: cumulative,
            bytes_up: 0,
            bytes_down: 0,
            train_loss,
            val_loss: Some(v.loss),
            accuracy: Some(v.accuracy),
            top_k_accuracy: Some(v.top_k),
            mse: v.mse,
        }
    }
}

/// Final model of a central run, with BatchNorm running statistics when the
/// model has any.
#[derive(Debug, Clone)]
pub struct CentralRun {
    pub spec: ModelSpec,
    pub params: ParameterSet,
    pub running: Option<ParameterSet>,
    pub history: Vec<MetricLine>,
}

fn central_typed<T: Example>(
    cfg: &ExperimentConfig,
    spec: ModelSpec,
    mut params: ParameterSet,
    train: &[T],
    validation: &[T],
    mut on_epoch: impl FnMut(&MetricLine) -> Result<()>,
) -> Result<CentralRun> {
    let c = &cfg.central;
    let m = &cfg.metrics;
    let mut running = spec.has_batch_norm().then(|| spec.init_running_stats());
    let eval = |params: &ParameterSet, running: &Option<ParameterSet>| {
        evaluate(
            &spec,
            params,
            running.as_ref(),
            validation,
            c.loss,
            m.top_k,
            m.eval_batch_size,
        )
    };
    let mut history = Vec::new();
    let first = MetricLine::central(0, 0, 0, None, &eval(&params, &running)?);
    on_epoch(&first)?;
    history.push(first);
    let mut shuffle = rng::stream(cfg.master_seed, &format!("{}/central", streams::SHUFFLE));
    let mut order: Vec<&T> = train.iter().collect();
    let mut cumulative = 0u64;
    for epoch in 1..=c.epochs {
        order.shuffle(&mut shuffle);
        let mut steps = 0u64;
        let mut loss_sum = 0.0;
        for chunk in order.chunks(c.batch_size) {
            let batch = T::to_batch(&spec, chunk)?;
            let pass = forward(&spec, &params, &batch, Phase::Train)?;
            let (loss, dlogits) = loss_and_grad(c.loss, pass.logits(), &batch.targets)?;
            let grads = backward(&spec, &params, &pass, &dlogits)?;
            sgd_step_in_place(&mut params, &grads, c.learning_rate)?;
            if let Some(r) = running.as_mut() {
                update_running_stats(&spec, r, &pass)?;
            }
            loss_sum += loss;
            steps += 1;
        }
        cumulative += steps;
        let train_loss = (steps > 0).then(|| loss_sum / steps as f64);
        let line = MetricLine::central(epoch, steps, cumulative, train_loss, &eval(&params, &running)?);
        on_epoch(&line)?;
        history.push(line);
    }
    Ok(CentralRun {
        spec,
        params,
        running,
        history,
    })
}

/// Centralized SGD baseline on the pooled training split.
pub fn run_central(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    on_epoch: impl FnMut(&MetricLine) -> Result<()>,
) -> Result<CentralRun> {
    let (spec, params) = build_model(cfg, &prepared.corpus)?;
    match (&prepared.train, &prepared.validation) {
        (Samples::Watch(t), Samples::Watch(v)) => central_typed(cfg, spec, params, t, v, on_epoch),
        (Samples::Rating(t), Samples::Rating(v)) => central_typed(cfg, spec, params, t, v, on_epoch),
        _ => bail!("training and validation samples differ in kind"),
    }
}

pub fn train_central_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<CentralRun> {
    fs::create_dir_all(out)?;
    write_config(cfg, out)?;
    let prepared = prepare(cfg)?;
    let mut metrics = JsonLines::create(&out.join(METRICS_FILE))?;
    let run = run_central(cfg, &prepared, |line| metrics.write(line))?;
    metrics.finish()?;
    save_params(&run.params, &out.join(MODEL_FILE))?;
    if let Some(r) = &run.running {
        save_params(r, &out.join(RUNNING_STATS_FILE))?;
    }
    Ok(run)
}

/// Transport selected by the compression section.
pub fn transport(cfg: &ExperimentConfig) -> Box<dyn Transport> {
    if cfg.compression.enabled {
        Box::new(CompressionTransport {
            config: cfg.compression.quant.clone(),
        })
    } else {
        Box::new(IdentityTransport)
    }
}

#[derive(Debug, Clone)]
pub struct FederatedRun {
    pub spec: ModelSpec,
    pub state: TrainingState,
    /// Most client models resident at the same time.
    pub peak_resident_clients: usize,
}

/// Federated training without file output. `on_round` may stop early by
/// returning `false`.
pub fn run_federated(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    resume: Option<TrainingState>,
    on_round: impl FnMut(&TrainingState, &MetricsRecord) -> Result<bool>,
) -> Result<FederatedRun> {
    let (spec, init) = build_model(cfg, &prepared.corpus)?;
    let fed = &cfg.federation;
    let state = resume.unwrap_or_else(|| TrainingState::initial(fed, init));
    let transport = transport(cfg);
    let residency = Residency::default();
    let mut on_round = on_round;
    let mut hook = |s: &TrainingState, r: &MetricsRecord| -> fedq_core::Result<bool> {
        on_round(s, r).map_err(|e| fedq_core::Error::Internal(format!("{e:#}")))
    };
    let state = match (&prepared.train, &prepared.validation) {
        (Samples::Watch(t), Samples::Watch(v)) => run_training(
            fed,
            &spec,
            &prepared.partition,
            t,
            v,
            transport.as_ref(),
            Some(&residency),
            state,
            &mut hook,
        )?,
        (Samples::Rating(t), Samples::Rating(v)) => run_training(
            fed,
            &spec,
            &prepared.partition,
            t,
            v,
            transport.as_ref(),
            Some(&residency),
            state,
            &mut hook,
        )?,
        _ => bail!("training and validation samples differ in kind"),
    };
    Ok(FederatedRun {
        spec,
        state,
        peak_resident_clients: residency.peak(),
    })
}

/// Resumable part of a [`TrainingState`]; the global model is stored next
/// to it in exact float64 form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub next_round: usize,
    pub selection_rng: RngState,
    pub cumulative_steps: u64,
    pub history: Vec<MetricsRecord>,
}

pub fn save_checkpoint(state: &TrainingState, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let record = CheckpointState {
        next_round: state.next_round,
        selection_rng: state.selection_rng.clone(),
        cumulative_steps: state.cumulative_steps,
        history: state.history.clone(),
    };
    let tmp = dir.join("global.fqx.tmp");
    fs::write(&tmp, encode_params_exact(&state.global))?;
    fs::rename(&tmp, dir.join("global.fqx"))?;
    let tmp = dir.join("state.json.tmp");
    fs::write(&tmp, serde_json::to_vec(&record)?)?;
    fs::rename(&tmp, dir.join("state.json"))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<TrainingState> {
    let state_path = dir.join("state.json");
    let record: CheckpointState =
        serde_json::from_slice(&fs::read(&state_path).with_context(|| format!("reading {}", state_path.display()))?)
            .with_context(|| format!("parsing {}", state_path.display()))?;
    let global = decode_params_exact(&fs::read(dir.join("global.fqx"))?)?;
    Ok(TrainingState {
        next_round: record.next_round,
        global,
        selection_rng: record.selection_rng,
        cumulative_steps: record.cumulative_steps,
        history: record.history,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FederatedOptions {
    /// Write a checkpoint every this many rounds (0 disables).
    pub checkpoint_every: usize,
    /// Continue from the checkpoint in the output directory.
    pub resume: bool,
    /// Stop after this round (for interrupted-run tests and staged runs).
    pub stop_after: Option<usize>,
}

#[derive(Serialize)]
struct TimingLine {
    round: usize,
    wall_seconds: f64,
}

/// Runs federated training and writes `config.json`, `metrics.jsonl`,
/// `timing.jsonl`, `model.fqs` and optional checkpoints into `out`.
/// Wall-clock times go to `timing.jsonl` only, so the metric file is
/// byte-identical across repeated runs.
pub fn train_federated_to_dir(cfg: &ExperimentConfig, out: &Path, opts: FederatedOptions) -> Result<FederatedRun> {
    fs::create_dir_all(out)?;
    write_config(cfg, out)?;
    let prepared = prepare(cfg)?;
    let checkpoint_dir = out.join(CHECKPOINT_DIR);
    let resume = if opts.resume {
        let state = load_checkpoint(&checkpoint_dir)?;
        if state.next_round > cfg.federation.rounds + 1 {
            bail!(
                "checkpoint is at round {} but federation.rounds is {}",
                state.next_round - 1,
                cfg.federation.rounds
            );
        }
        Some(state)
    } else {
        None
    };
    let mut metrics = JsonLines::create(&out.join(METRICS_FILE))?;
    if let Some(state) = &resume {
        for r in &state.history {
            metrics.write(&MetricLine::from_federated(r))?;
        }
    }
    let mut timing = JsonLines::open(&out.join(TIMING_FILE), opts.resume)?;
    let mut clock = Instant::now();
    let run = run_federated(cfg, &prepared, resume, |state, record| {
        metrics.write(&MetricLine::from_federated(record))?;
        metrics.flush()?;
        timing.write(&TimingLine {
            round: record.round,
            wall_seconds: clock.elapsed().as_secs_f64(),
        })?;
        clock = Instant::now();
        if opts.checkpoint_every > 0 && record.round > 0 && record.round % opts.checkpoint_every == 0 {
            save_checkpoint(state, &checkpoint_dir)?;
        }
        Ok(opts.stop_after.is_none_or(|stop| record.round < stop))
    })?;
    metrics.finish()?;
    timing.finish()?;
    save_params(&run.state.global, &out.join(MODEL_FILE))?;
    Ok(run)
}

/// One QP of a compression sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLine {
    pub kind: String,
    pub qp: i32,
    pub step_size: f64,
    pub parameters: u64,
    pub uncompressed_bytes: u64,
    pub bytes: u64,
    pub space_saving: f64,
    /// Bits per index of the quantized weights.
    pub entropy_bits: f64,
    pub val_loss: f64,
    pub accuracy: f64,
    pub top_k_accuracy: f64,
    pub mse: Option<f64>,
    /// Uncompressed top-k accuracy minus compressed top-k accuracy.
    pub top_k_drop: f64,
}

/// Quantizes and encodes `params` at every QP in the sweep and evaluates
/// the decoded model on the validation split.
pub fn compress_sweep(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    spec: &ModelSpec,
    params: &ParameterSet,
    running: Option<&ParameterSet>,
) -> Result<Vec<SweepLine>> {
    spec.check_params(params)?;
    let m = &cfg.metrics;
    let loss = cfg.federation.loss;
    let eval = |p: &ParameterSet| -> Result<EvalMetrics> {
        Ok(match &prepared.validation {
            Samples::Watch(v) => evaluate(spec, p, running, v, loss, m.top_k, m.eval_batch_size)?,
            Samples::Rating(v) => evaluate(spec, p, running, v, loss, m.top_k, m.eval_batch_size)?,
        })
    };
    let baseline = eval(params)?;
    let parameters = params.scalar_count() as u64;
    let uncompressed = 4 * parameters;
    let mut lines = Vec::with_capacity(cfg.compression.sweep.len());
    for &qp in &cfg.compression.sweep {
        let quant = QuantConfig {
            qp,
            ..cfg.compression.quant.clone()
        };
        let tensors = quantize_model(params, &quant)?;
        let bytes = encode(&tensors).to_bytes().len() as u64;
        let decoded = eval(&dequantize_model(&tensors)?)?;
        lines.push(SweepLine {
            kind: "sweep".into(),
            qp,
            step_size: quant.step_for("")?,
            parameters,
            uncompressed_bytes: uncompressed,
            bytes,
            space_saving: space_saving(uncompressed, bytes)?,
            entropy_bits: weight_entropy(&tensors)?,
            val_loss: decoded.loss,
            accuracy: decoded.accuracy,
            top_k_accuracy: decoded.top_k,
            mse: decoded.mse,
            top_k_drop: baseline.top_k - decoded.top_k,
        });
    }
    Ok(lines)
}

/// Sweeps the model at `model` (default `out/model.fqs`) and writes
/// `sweep.jsonl`.
pub fn compress_eval_to_dir(cfg: &ExperimentConfig, model: Option<&Path>, out: &Path) -> Result<Vec<SweepLine>> {
    fs::create_dir_all(out)?;
    let model_path: PathBuf = model.map(Path::to_path_buf).unwrap_or_else(|| out.join(MODEL_FILE));
    let params = load_params(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let running_path = model_path.with_file_name(RUNNING_STATS_FILE);
    let running = if running_path.exists() {
        Some(load_params(&running_path)?)
    } else {
        None
    };
    let prepared = prepare(cfg)?;
    let (spec, _) = build_model(cfg, &prepared.corpus)?;
    let lines = compress_sweep(cfg, &prepared, &spec, &params, running.as_ref())?;
    let mut w = JsonLines::create(&out.join(SWEEP_FILE))?;
    for l in &lines {
        w.write(l)?;
    }
    w.finish()?;
    Ok(lines)
}

pub fn write_config(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    write_json(&out.join(CONFIG_FILE), cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Line-buffered JSONL writer.
struct JsonLines {
    inner: BufWriter<File>,
}

impl JsonLines {
    fn create(path: &Path) -> Result<Self> {
        Self::open(path, false)
    }

    fn open(path: &Path, append: bool) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(Self {
            inner: BufWriter::new(file),
        })
    }

    fn write<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, value)?;
        self.inner.write_all(b"\n")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.flush()
    }
}
