use std::path::PathBuf;

use anyhow::{bail, Result};
use fedq_core::compression::QuantConfig;
use fedq_core::data::{OrderingMode, SyntheticConfig};
use fedq_core::federation::FederationConfig;
use fedq_core::models::{CandidateGeneratorConfig, NormKind, RankerConfig};
use fedq_core::nn::LossKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Movielens {
        ratings: PathBuf,
        movies: PathBuf,
        /// Optional `movieId,releaseYear` sidecar.
        #[serde(default)]
        release_years: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PartitionConfig {
    PerUser,
    Iid { num_clients: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub window: usize,
    pub ordering: OrderingMode,
    pub train_fraction: f64,
    pub partition: PartitionConfig,
    /// Year movie ages are measured from.
    pub reference_year: i32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticConfig::default()),
            window: 7,
            ordering: OrderingMode::TimestampAsc,
            train_fraction: 0.9,
            partition: PartitionConfig::PerUser,
            reference_year: 2023,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    CandidateGenerator,
    Ranker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub candidate_generator: CandidateGeneratorConfig,
    pub ranker: RankerConfig,
    /// Size the vocabularies from the prepared corpus instead of the values above.
    pub fit_to_data: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::CandidateGenerator,
            candidate_generator: CandidateGeneratorConfig {
                input_vocab_size: 501,
                output_vocab_size: 500,
                embedding_dim: 16,
                hidden_sizes: vec![64, 32],
                norm: NormKind::GroupNorm { groups: 8 },
            },
            ranker: RankerConfig {
                num_users: 2_000,
                num_movies: 500,
                num_genres: 20,
                user_dim: 8,
                movie_dim: 16,
                genre_dim: 4,
                hidden_sizes: vec![32],
                norm: NormKind::GroupNorm { groups: 8 },
                ..RankerConfig::default()
            },
            fit_to_data: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
}

impl Default for CentralConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.1,
            loss: LossKind::SoftmaxCrossEntropy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionConfig {
    /// Compress every model transfer during federated training.
    pub enabled: bool,
    pub quant: QuantConfig,
    /// QPs evaluated by `compress-eval`.
    pub sweep: Vec<i32>,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            quant: QuantConfig::default(),
            sweep: vec![-48, -43, -38, -30, -24],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub top_k: usize,
    pub eval_every: usize,
    pub eval_batch_size: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            eval_every: 1,
            eval_batch_size: 1024,
        }
    }
}

/// One experiment. `master_seed` is authoritative: it replaces the
/// synthetic-corpus and federation seeds when the config is resolved, and
/// `metrics` replaces the evaluation settings inside `federation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub federation: FederationConfig,
    pub central: CentralConfig,
    pub compression: CompressionConfig,
    pub metrics: MetricsConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            master_seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            federation: FederationConfig::default(),
            central: CentralConfig::default(),
            compression: CompressionConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Propagates the master seed and metric settings into the sections
    /// that carry their own copies, then validates.
    pub fn resolve(mut self) -> Result<Self> {
        if let DataSource::Synthetic(s) = &mut self.data.source {
            s.seed = self.master_seed;
        }
        self.federation.seed = self.master_seed;
        self.federation.top_k = self.metrics.top_k;
        self.federation.eval_every = self.metrics.eval_every;
        self.federation.eval_batch_size = self.metrics.eval_batch_size;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.window == 0 {
            bail!("data.window must be >= 1");
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            bail!(
                "data.train_fraction must be in (0, 1), got {}",
                self.data.train_fraction
            );
        }
        if let PartitionConfig::Iid { num_clients: 0 } = self.data.partition {
            bail!("data.partition.num_clients must be >= 1");
        }
        if self.metrics.top_k == 0 || self.metrics.eval_every == 0 || self.metrics.eval_batch_size == 0 {
            bail!("metrics.top_k, metrics.eval_every and metrics.eval_batch_size must be >= 1");
        }
        if self.central.batch_size == 0 {
            bail!("central.batch_size must be >= 1");
        }
        if !(self.central.learning_rate.is_finite() && self.central.learning_rate >= 0.0) {
            bail!("central.learning_rate must be finite and >= 0");
        }
        if self.federation.clients_per_round == 0 {
            bail!("federation.clients_per_round must be >= 1");
        }
        if self.federation.algorithm == fedq_core::federation::Algorithm::FedQ
            && (self.federation.queue_length == 0
                || !self
                    .federation
                    .clients_per_round
                    .is_multiple_of(self.federation.queue_length))
        {
            bail!(
                "federation.queue_length ({}) must divide federation.clients_per_round ({})",
                self.federation.queue_length,
                self.federation.clients_per_round
            );
        }
        if self.compression.quant.f_qp >= 31 {
            bail!("compression.quant.f_qp must be < 31");
        }
        Ok(())
    }
}
