use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Tensor};

pub const NORM_EPSILON: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

/// One entry of the layer inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Embedding {
        vocab_size: usize,
        dim: usize,
    },
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
    GroupNorm {
        num_groups: usize,
        channels: usize,
        epsilon: f64,
    },
    BatchNorm {
        channels: usize,
        epsilon: f64,
        momentum: f64,
    },
    ReLU,
    MeanPoolOverSequence,
    Concat,
}

impl LayerSpec {
    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Embedding { vocab_size, dim } => vocab_size * dim,
            LayerSpec::FullyConnected { in_dim, out_dim } => in_dim * out_dim + out_dim,
            LayerSpec::GroupNorm { channels, .. } | LayerSpec::BatchNorm { channels, .. } => 2 * channels,
            LayerSpec::ReLU | LayerSpec::MeanPoolOverSequence | LayerSpec::Concat => 0,
        }
    }
}

/// A model input branch, feeding the concatenated feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSpec {
    /// Embedding lookup. A pooled input averages a variable-length bag of
    /// indices; an unpooled input takes exactly one index per row. Entries equal
    /// to `padding_index` are skipped and do not count toward the mean.
    Embedding {
        name: String,
        vocab_size: usize,
        dim: usize,
        pooled: bool,
        padding_index: Option<usize>,
    },
    /// Dense real-valued features copied verbatim.
    Dense { name: String, width: usize },
}

impl InputSpec {
    pub fn width(&self) -> usize {
        match self {
            InputSpec::Embedding { dim, .. } => *dim,
            InputSpec::Dense { width, .. } => *width,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            InputSpec::Embedding { name, .. } | InputSpec::Dense { name, .. } => name,
        }
    }
}

/// Where a layer's parameters live inside the `ParameterSet`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    None,
    One(usize),
    Two(usize, usize),
}

/// Input branches, concatenated, followed by a dense tower producing logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpecDef")]
pub struct ModelSpec {
    inputs: Vec<InputSpec>,
    tower: Vec<LayerSpec>,
    #[serde(skip)]
    layout: Layout,
}

#[derive(Deserialize)]
struct ModelSpecDef {
    inputs: Vec<InputSpec>,
    tower: Vec<LayerSpec>,
}

impl TryFrom<ModelSpecDef> for ModelSpec {
    type Error = Error;

    fn try_from(def: ModelSpecDef) -> Result<Self> {
        ModelSpec::new(def.inputs, def.tower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ParamKind {
    Embedding { dim: usize },
    Weight { fan_in: usize },
    Bias { fan_in: usize },
    Gamma,
    Beta,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct Layout {
    names: Vec<(String, Vec<usize>)>,
    kinds: Vec<ParamKind>,
    input_slots: Vec<Slot>,
    tower_slots: Vec<Slot>,
    /// Running-statistics names for BatchNorm layers, by tower position.
    running: Vec<Option<(String, String)>>,
    concat_width: usize,
    output_dim: usize,
}

impl ModelSpec {
    pub fn new(inputs: Vec<InputSpec>, tower: Vec<LayerSpec>) -> Result<Self> {
        let mut spec = Self {
            inputs,
            tower,
            layout: Layout::default(),
        };
        spec.layout = spec.build_layout()?;
        Ok(spec)
    }

    fn build_layout(&self) -> Result<Layout> {
        if self.inputs.is_empty() {
            return Err(Error::config("model needs at least one input"));
        }
        let mut names: Vec<(String, Vec<usize>)> = Vec::new();
        let mut kinds = Vec::new();
        let mut input_slots = Vec::new();
        for input in &self.inputs {
            match input {
                InputSpec::Embedding {
                    name,
                    vocab_size,
                    dim,
                    padding_index,
                    ..
                } => {
                    if *vocab_size < 1 || *dim < 1 {
                        return Err(Error::config(format!(
                            "embedding {name}: vocab_size and dim must be >= 1 (got {vocab_size}, {dim})"
                        )));
                    }
                    if let Some(p) = padding_index {
                        if p >= vocab_size {
                            return Err(Error::config(format!(
                                "embedding {name}: padding index {p} outside vocab {vocab_size}"
                            )));
                        }
                    }
                    input_slots.push(Slot::One(names.len()));
                    names.push((format!("{name}.weight"), vec![*vocab_size, *dim]));
                    kinds.push(ParamKind::Embedding { dim: *dim });
                }
                InputSpec::Dense { name, width } => {
                    if *width < 1 {
                        return Err(Error::config(format!("dense input {name} needs width >= 1")));
                    }
                    input_slots.push(Slot::None);
                }
            }
        }

        let concat_width: usize = self.inputs.iter().map(InputSpec::width).sum();
        let mut width = concat_width;
        let mut tower_slots = Vec::new();
        let mut running = Vec::new();
        let (mut fc, mut norm) = (0usize, 0usize);
        for (pos, layer) in self.tower.iter().enumerate() {
            let mut run = None;
            let slot = match *layer {
                LayerSpec::FullyConnected { in_dim, out_dim } => {
                    if in_dim != width || out_dim < 1 {
                        return Err(Error::config(format!(
                            "tower layer {pos}: fully-connected expects in_dim {width}, got {in_dim}x{out_dim}"
                        )));
                    }
                    let slot = Slot::Two(names.len(), names.len() + 1);
                    names.push((format!("fc{fc}.weight"), vec![out_dim, in_dim]));
                    names.push((format!("fc{fc}.bias"), vec![out_dim]));
                    kinds.push(ParamKind::Weight { fan_in: in_dim });
                    kinds.push(ParamKind::Bias { fan_in: in_dim });
                    fc += 1;
                    width = out_dim;
                    slot
                }
                LayerSpec::GroupNorm {
                    num_groups,
                    channels,
                    epsilon,
                } => {
                    if channels != width {
                        return Err(Error::config(format!(
                            "tower layer {pos}: group norm over {channels} channels, input has {width}"
                        )));
                    }
                    if num_groups == 0 || channels % num_groups != 0 {
                        return Err(Error::config(format!(
                            "tower layer {pos}: num_groups {num_groups} must divide channels {channels}"
                        )));
                    }
                    if epsilon.is_nan() || epsilon <= 0.0 {
                        return Err(Error::config(format!("tower layer {pos}: epsilon must be > 0")));
                    }
                    let slot = Slot::Two(names.len(), names.len() + 1);
                    names.push((format!("norm{norm}.gamma"), vec![channels]));
                    names.push((format!("norm{norm}.beta"), vec![channels]));
                    kinds.push(ParamKind::Gamma);
                    kinds.push(ParamKind::Beta);
                    norm += 1;
                    slot
                }
                LayerSpec::BatchNorm {
                    channels,
                    epsilon,
                    momentum,
                } => {
                    if channels != width {
                        return Err(Error::config(format!(
                            "tower layer {pos}: batch norm over {channels} channels, input has {width}"
                        )));
                    }
                    if epsilon.is_nan() || epsilon <= 0.0 || !(0.0..=1.0).contains(&momentum) {
                        return Err(Error::config(format!(
                            "tower layer {pos}: batch norm needs epsilon > 0 and momentum in [0, 1]"
                        )));
                    }
                    let slot = Slot::Two(names.len(), names.len() + 1);
                    names.push((format!("norm{norm}.gamma"), vec![channels]));
                    names.push((format!("norm{norm}.beta"), vec![channels]));
                    kinds.push(ParamKind::Gamma);
                    kinds.push(ParamKind::Beta);
                    run = Some((format!("norm{norm}.running_mean"), format!("norm{norm}.running_var")));
                    norm += 1;
                    slot
                }
                LayerSpec::ReLU => Slot::None,
                LayerSpec::Embedding { .. } | LayerSpec::MeanPoolOverSequence | LayerSpec::Concat => {
                    return Err(Error::config(format!(
                        "tower layer {pos}: {layer:?} is only valid as part of an input branch"
                    )));
                }
            };
            tower_slots.push(slot);
            running.push(run);
        }
        Ok(Layout {
            names,
            kinds,
            input_slots,
            tower_slots,
            running,
            concat_width,
            output_dim: width,
        })
    }

    pub fn inputs(&self) -> &[InputSpec] {
        &self.inputs
    }

    pub fn tower(&self) -> &[LayerSpec] {
        &self.tower
    }

    pub fn output_dim(&self) -> usize {
        self.layout.output_dim
    }

    pub fn concat_width(&self) -> usize {
        self.layout.concat_width
    }

    pub(crate) fn input_slot(&self, i: usize) -> Slot {
        self.layout.input_slots[i]
    }

    pub(crate) fn tower_slot(&self, i: usize) -> Slot {
        self.layout.tower_slots[i]
    }

    pub(crate) fn running_names(&self, i: usize) -> Option<&(String, String)> {
        self.layout.running[i].as_ref()
    }

    /// Flattened layer sequence: input branches (embedding, optional pooling),
    /// a concatenation when there is more than one branch, then the tower.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for input in &self.inputs {
            if let InputSpec::Embedding {
                vocab_size,
                dim,
                pooled,
                ..
            } = input
            {
                out.push(LayerSpec::Embedding {
                    vocab_size: *vocab_size,
                    dim: *dim,
                });
                if *pooled {
                    out.push(LayerSpec::MeanPoolOverSequence);
                }
            }
        }
        if self.inputs.len() > 1 {
            out.push(LayerSpec::Concat);
        }
        out.extend(self.tower.iter().cloned());
        out
    }

    /// (name, shape) of every trainable tensor, in storage order.
    pub fn parameter_shapes(&self) -> &[(String, Vec<usize>)] {
        &self.layout.names
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.names.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.tower.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. }))
    }

    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        if params.len() != self.layout.names.len() {
            return Err(Error::config(format!(
                "model expects {} parameter tensors, got {}",
                self.layout.names.len(),
                params.len()
            )));
        }
        for ((name, shape), (pn, pt)) in self.layout.names.iter().zip(params.iter()) {
            if name != pn || shape.as_slice() != pt.shape() {
                return Err(Error::config(format!(
                    "parameter {pn} {:?} does not match expected {name} {shape:?}",
                    pt.shape()
                )));
            }
        }
        Ok(())
    }

    /// Fully-connected weights and biases uniform in ±1/√fan_in, embeddings
    /// N(0, 1)/√dim, normalization γ = 1 and β = 0.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterSet {
        let mut entries = Vec::with_capacity(self.layout.names.len());
        for ((name, shape), kind) in self.layout.names.iter().zip(&self.layout.kinds) {
            let len: usize = shape.iter().product();
            let data: Vec<f64> = match *kind {
                ParamKind::Gamma => vec![1.0; len],
                ParamKind::Beta => vec![0.0; len],
                ParamKind::Embedding { dim } => {
                    let scale = 1.0 / (dim as f64).sqrt();
                    (0..len)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(rng);
                            scale * z
                        })
                        .collect()
                }
                ParamKind::Weight { fan_in } | ParamKind::Bias { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
                }
            };
            entries.push((
                name.clone(),
                Tensor::new(shape.clone(), data).expect("layout shapes are valid"),
            ));
        }
        ParameterSet::from_entries(entries).expect("layout names are unique")
    }

    /// Running mean 0 and variance 1 for every BatchNorm layer; empty otherwise.
    pub fn init_running_stats(&self) -> ParameterSet {
        let mut set = ParameterSet::new();
        for (pos, layer) in self.tower.iter().enumerate() {
            if let (LayerSpec::BatchNorm { channels, .. }, Some((m, v))) = (layer, &self.layout.running[pos]) {
                set.push(m.clone(), Tensor::zeros(&[*channels])).expect("unique");
                set.push(v.clone(), Tensor::filled(&[*channels], 1.0)).expect("unique");
            }
        }
        set
    }
}

/// Variable-length index bags in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexBags {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl IndexBags {
    pub fn from_rows<R: AsRef<[usize]>>(rows: &[R]) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for row in rows {
            indices.extend_from_slice(row.as_ref());
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    /// One index per row.
    pub fn singles(values: &[usize]) -> Self {
        Self {
            offsets: (0..=values.len()).collect(),
            indices: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.indices[self.offsets[r]..self.offsets[r + 1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputField {
    Bags(IndexBags),
    Dense(Array2<f64>),
}

impl InputField {
    pub fn rows(&self) -> usize {
        match self {
            InputField::Bags(b) => b.rows(),
            InputField::Dense(m) => m.nrows(),
        }
    }
}

/// Model inputs, one field per input branch, plus class targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<InputField>,
    pub targets: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.first().map_or(0, InputField::rows)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
