use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::PADDING_INDEX;
use crate::nn::{InputSpec, LayerSpec, ModelSpec, ParameterSet, BATCH_NORM_MOMENTUM, NORM_EPSILON};

/// Normalization applied after every hidden fully-connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    GroupNorm { groups: usize },
    BatchNorm,
}

impl Default for NormKind {
    fn default() -> Self {
        NormKind::GroupNorm { groups: 32 }
    }
}

impl NormKind {
    fn layer(self, channels: usize) -> LayerSpec {
        match self {
            NormKind::GroupNorm { groups } => LayerSpec::GroupNorm {
                num_groups: groups,
                channels,
                epsilon: NORM_EPSILON,
            },
            NormKind::BatchNorm => LayerSpec::BatchNorm {
                channels,
                epsilon: NORM_EPSILON,
                momentum: BATCH_NORM_MOMENTUM,
            },
        }
    }
}

fn tower(input_width: usize, hidden: &[usize], norm: NormKind, outputs: usize) -> Result<Vec<LayerSpec>> {
    let mut layers = Vec::with_capacity(3 * hidden.len() + 1);
    let mut width = input_width;
    for &h in hidden {
        if h == 0 {
            return Err(Error::config("hidden layer sizes must be >= 1"));
        }
        layers.push(LayerSpec::FullyConnected {
            in_dim: width,
            out_dim: h,
        });
        layers.push(norm.layer(h));
        layers.push(LayerSpec::ReLU);
        width = h;
    }
    layers.push(LayerSpec::FullyConnected {
        in_dim: width,
        out_dim: outputs,
    });
    Ok(layers)
}

/// Next-watch model: mean-pooled history embedding, dense tower, softmax
/// over all movies. Input index 0 is padding, so the input vocabulary is
/// one larger than the output vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateGeneratorConfig {
    pub input_vocab_size: usize,
    pub output_vocab_size: usize,
    pub embedding_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub norm: NormKind,
}

impl Default for CandidateGeneratorConfig {
    fn default() -> Self {
        Self {
            input_vocab_size: 53_797,
            output_vocab_size: 53_796,
            embedding_dim: 64,
            hidden_sizes: vec![1024, 512, 256],
            norm: NormKind::default(),
        }
    }
}

impl CandidateGeneratorConfig {
    /// Vocabulary sized for `num_movies` movies plus the padding row.
    pub fn for_movies(num_movies: usize) -> Self {
        Self {
            input_vocab_size: num_movies + 1,
            output_vocab_size: num_movies,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_vocab_size == 0 || self.embedding_dim == 0 {
            return Err(Error::config("output_vocab_size and embedding_dim must be >= 1"));
        }
        if self.input_vocab_size != self.output_vocab_size + 1 {
            return Err(Error::config(format!(
                "input_vocab_size ({}) must equal output_vocab_size + 1 ({}) to reserve the padding index",
                self.input_vocab_size,
                self.output_vocab_size + 1
            )));
        }
        Ok(())
    }
}

pub fn candidate_generator_spec(config: &CandidateGeneratorConfig) -> Result<ModelSpec> {
    config.validate()?;
    ModelSpec::new(
        vec![InputSpec::Embedding {
            name: "history".into(),
            vocab_size: config.input_vocab_size,
            dim: config.embedding_dim,
            pooled: true,
            padding_index: Some(PADDING_INDEX),
        }],
        tower(
            config.embedding_dim,
            &config.hidden_sizes,
            config.norm,
            config.output_vocab_size,
        )?,
    )
}

pub fn build_candidate_generator<R: Rng + ?Sized>(
    config: &CandidateGeneratorConfig,
    rng: &mut R,
) -> Result<(ModelSpec, ParameterSet)> {
    let spec = candidate_generator_spec(config)?;
    let params = spec.init_params(rng);
    Ok((spec, params))
}

/// Rating model: user, movie and mean-pooled genre embeddings plus an
/// optional movie-age feature, concatenated into a dense tower that
/// classifies into 10 half-star ratings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub num_users: usize,
    pub num_movies: usize,
    pub num_genres: usize,
    pub user_dim: usize,
    pub movie_dim: usize,
    pub genre_dim: usize,
    pub hidden_sizes: Vec<usize>,
    pub num_classes: usize,
    pub use_movie_age: bool,
    pub norm: NormKind,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            num_users: 162_541,
            num_movies: 53_796,
            num_genres: 20,
            user_dim: 32,
            movie_dim: 128,
            genre_dim: 16,
            hidden_sizes: vec![256],
            num_classes: 10,
            use_movie_age: true,
            norm: NormKind::default(),
        }
    }
}

impl RankerConfig {
    pub fn concat_width(&self) -> usize {
        self.user_dim + self.movie_dim + self.genre_dim + usize::from(self.use_movie_age)
    }
}

pub fn ranker_spec(config: &RankerConfig) -> Result<ModelSpec> {
    let c = config;
    if [c.num_users, c.num_movies, c.num_genres, c.num_classes].contains(&0) {
        return Err(Error::config("ranker vocabularies and class count must be >= 1"));
    }
    let mut inputs = vec![
        InputSpec::Embedding {
            name: "user".into(),
            vocab_size: c.num_users,
            dim: c.user_dim,
            pooled: false,
            padding_index: None,
        },
        InputSpec::Embedding {
            name: "movie".into(),
            vocab_size: c.num_movies,
            dim: c.movie_dim,
            pooled: false,
            padding_index: None,
        },
        InputSpec::Embedding {
            name: "genre".into(),
            vocab_size: c.num_genres,
            dim: c.genre_dim,
            pooled: true,
            padding_index: None,
        },
    ];
    if c.use_movie_age {
        inputs.push(InputSpec::Dense {
            name: "movie_age".into(),
            width: 1,
        });
    }
    ModelSpec::new(inputs, tower(c.concat_width(), &c.hidden_sizes, c.norm, c.num_classes)?)
}

pub fn build_ranker<R: Rng + ?Sized>(config: &RankerConfig, rng: &mut R) -> Result<(ModelSpec, ParameterSet)> {
    let spec = ranker_spec(config)?;
    let params = spec.init_params(rng);
    Ok((spec, params))
}
