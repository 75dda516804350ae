//! Forward and reverse passes over a [`ModelSpec`].

use ndarray::{s, Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::spec::Slot;
use crate::nn::{Batch, GradientSet, InputField, InputSpec, LayerSpec, ModelSpec, ParameterSet, Tensor};

/// Normalization behaviour for one pass.
#[derive(Debug, Clone, Copy)]
pub enum Phase<'a> {
    /// Batch statistics for BatchNorm.
    Train,
    /// Running statistics for BatchNorm (may be empty for GroupNorm-only models).
    Eval(&'a ParameterSet),
}

#[derive(Debug, Clone)]
enum LayerCache {
    None,
    /// Normalized values and 1/σ per (row, group).
    Group {
        xhat: Array2<f64>,
        inv_std: Array2<f64>,
    },
    /// Normalized values and 1/σ per channel; `frozen` when running statistics were used.
    Batch {
        xhat: Array2<f64>,
        inv_std: Array1<f64>,
        frozen: bool,
    },
}

/// Batch statistics observed by one BatchNorm layer in a training pass.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub tower_position: usize,
    pub mean: Array1<f64>,
    /// Unbiased variance (n - 1 denominator).
    pub variance: Array1<f64>,
}

/// Logits plus everything `backward` needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    logits: Array2<f64>,
    bags: Vec<Option<(Vec<Vec<usize>>, usize)>>,
    tower_inputs: Vec<Array2<f64>>,
    caches: Vec<LayerCache>,
    batch_stats: Vec<BatchStats>,
    fingerprint: (usize, usize, usize),
}

impl ForwardPass {
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn into_logits(self) -> Array2<f64> {
        self.logits
    }

    pub fn batch_stats(&self) -> &[BatchStats] {
        &self.batch_stats
    }
}

fn fingerprint(spec: &ModelSpec, rows: usize) -> (usize, usize, usize) {
    (spec.tower().len(), spec.parameter_shapes().len(), rows)
}

fn two(slot: Slot) -> (usize, usize) {
    match slot {
        Slot::Two(a, b) => (a, b),
        _ => unreachable!("layer without two parameter slots"),
    }
}

pub fn forward(spec: &ModelSpec, params: &ParameterSet, batch: &Batch, phase: Phase<'_>) -> Result<ForwardPass> {
    spec.check_params(params)?;
    if batch.inputs.len() != spec.inputs().len() {
        return Err(Error::config(format!(
            "model has {} inputs, batch provides {}",
            spec.inputs().len(),
            batch.inputs.len()
        )));
    }
    let rows = batch.len();
    if rows == 0 {
        return Err(Error::data("empty batch"));
    }

    let mut x = Array2::<f64>::zeros((rows, spec.concat_width()));
    let mut bags = Vec::with_capacity(spec.inputs().len());
    let mut col = 0;
    for (i, (input, field)) in spec.inputs().iter().zip(&batch.inputs).enumerate() {
        if field.rows() != rows {
            return Err(Error::config(format!(
                "input {} has {} rows, expected {rows}",
                input.name(),
                field.rows()
            )));
        }
        let width = input.width();
        match (input, field) {
            (
                InputSpec::Embedding {
                    name,
                    vocab_size,
                    pooled,
                    padding_index,
                    ..
                },
                InputField::Bags(b),
            ) => {
                let Slot::One(p) = spec.input_slot(i) else {
                    unreachable!()
                };
                let table = params.tensor(p).matrix();
                let mut kept_rows = Vec::with_capacity(rows);
                for r in 0..rows {
                    let row = b.row(r);
                    if !pooled && row.len() != 1 {
                        return Err(Error::data(format!(
                            "input {name} row {r}: expected exactly one index, got {}",
                            row.len()
                        )));
                    }
                    let mut kept = Vec::with_capacity(row.len());
                    for &idx in row {
                        if idx >= *vocab_size {
                            return Err(Error::data(format!(
                                "embedding index {idx} out of range for {name} (vocab {vocab_size})"
                            )));
                        }
                        if Some(idx) != *padding_index {
                            kept.push(idx);
                        }
                    }
                    if kept.is_empty() {
                        return Err(Error::data(format!("input {name} row {r} has no non-padding entries")));
                    }
                    let scale = 1.0 / kept.len() as f64;
                    let mut out = x.slice_mut(s![r, col..col + width]);
                    for &idx in &kept {
                        out.scaled_add(scale, &table.row(idx));
                    }
                    kept_rows.push(kept);
                }
                bags.push(Some((kept_rows, col)));
            }
            (InputSpec::Dense { name, .. }, InputField::Dense(m)) => {
                if m.ncols() != width {
                    return Err(Error::config(format!(
                        "dense input {name} expects width {width}, got {}",
                        m.ncols()
                    )));
                }
                x.slice_mut(s![.., col..col + width]).assign(m);
                bags.push(None);
            }
            _ => {
                return Err(Error::config(format!(
                    "input {} received the wrong field kind",
                    input.name()
                )))
            }
        }
        col += width;
    }

    let mut tower_inputs = Vec::with_capacity(spec.tower().len());
    let mut caches = Vec::with_capacity(spec.tower().len());
    let mut batch_stats = Vec::new();
    for (pos, layer) in spec.tower().iter().enumerate() {
        let (out, cache) = match *layer {
            LayerSpec::FullyConnected { .. } => {
                let (w, b) = two(spec.tower_slot(pos));
                let mut y = x.dot(&params.tensor(w).matrix().t());
                let bias = Array1::from(params.tensor(b).data().to_vec());
                y += &bias;
                (y, LayerCache::None)
            }
            LayerSpec::ReLU => (x.mapv(|v| v.max(0.0)), LayerCache::None),
            LayerSpec::GroupNorm {
                num_groups,
                channels,
                epsilon,
            } => {
                let (g, b) = two(spec.tower_slot(pos));
                let gamma = params.tensor(g).data();
                let beta = params.tensor(b).data();
                let size = channels / num_groups;
                let mut xhat = Array2::<f64>::zeros(x.raw_dim());
                let mut inv_std = Array2::<f64>::zeros((rows, num_groups));
                let mut y = Array2::<f64>::zeros(x.raw_dim());
                for r in 0..rows {
                    let xr = x.row(r);
                    for grp in 0..num_groups {
                        let span = grp * size..(grp + 1) * size;
                        let vals = xr.slice(s![span.clone()]);
                        let mean = vals.sum() / size as f64;
                        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / size as f64;
                        let is = 1.0 / (var + epsilon).sqrt();
                        inv_std[[r, grp]] = is;
                        for c in span {
                            let h = (xr[c] - mean) * is;
                            xhat[[r, c]] = h;
                            y[[r, c]] = gamma[c] * h + beta[c];
                        }
                    }
                }
                (y, LayerCache::Group { xhat, inv_std })
            }
            LayerSpec::BatchNorm { channels, epsilon, .. } => {
                let (g, b) = two(spec.tower_slot(pos));
                let gamma = params.tensor(g).data();
                let beta = params.tensor(b).data();
                let (mean, var, frozen) = match phase {
                    Phase::Train => {
                        let mean = x.mean_axis(Axis(0)).expect("rows > 0");
                        let centered = &x - &mean;
                        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("rows > 0");
                        let unbiased = if rows > 1 {
                            &var * (rows as f64 / (rows - 1) as f64)
                        } else {
                            var.clone()
                        };
                        batch_stats.push(BatchStats {
                            tower_position: pos,
                            mean: mean.clone(),
                            variance: unbiased,
                        });
                        (mean, var, false)
                    }
                    Phase::Eval(running) => {
                        let (m, v) = spec.running_names(pos).expect("batch norm has running names");
                        let (Some(m), Some(v)) = (running.get(m), running.get(v)) else {
                            return Err(Error::config("batch norm evaluation needs running statistics"));
                        };
                        if m.len() != channels || v.len() != channels {
                            return Err(Error::config("running statistics have the wrong width"));
                        }
                        (Array1::from(m.data().to_vec()), Array1::from(v.data().to_vec()), true)
                    }
                };
                let inv_std = var.mapv(|v| 1.0 / (v + epsilon).sqrt());
                let xhat = (&x - &mean) * &inv_std;
                let y = &xhat * &Array1::from(gamma.to_vec()) + &Array1::from(beta.to_vec());
                (y, LayerCache::Batch { xhat, inv_std, frozen })
            }
            _ => unreachable!("validated by ModelSpec"),
        };
        tower_inputs.push(x);
        caches.push(cache);
        x = out;
    }

    Ok(ForwardPass {
        logits: x,
        bags,
        tower_inputs,
        caches,
        batch_stats,
        fingerprint: fingerprint(spec, rows),
    })
}

pub fn backward(
    spec: &ModelSpec,
    params: &ParameterSet,
    pass: &ForwardPass,
    dlogits: &Array2<f64>,
) -> Result<GradientSet> {
    if pass.fingerprint != fingerprint(spec, pass.logits.nrows()) || pass.caches.len() != spec.tower().len() {
        return Err(Error::Internal("forward cache does not match this model".into()));
    }
    if dlogits.dim() != pass.logits.dim() {
        return Err(Error::Internal(format!(
            "loss gradient shape {:?} does not match logits {:?}",
            dlogits.dim(),
            pass.logits.dim()
        )));
    }
    spec.check_params(params)?;
    let mut grads = params.zeros_like();
    let mut dy = dlogits.clone();

    for pos in (0..spec.tower().len()).rev() {
        let x = &pass.tower_inputs[pos];
        dy = match (&spec.tower()[pos], &pass.caches[pos]) {
            (LayerSpec::FullyConnected { .. }, _) => {
                let (w, b) = two(spec.tower_slot(pos));
                let dw = dy.t().dot(x);
                grads.tensor_mut(w).matrix_mut().assign(&dw);
                let db = dy.sum_axis(Axis(0));
                grads
                    .tensor_mut(b)
                    .data_mut()
                    .copy_from_slice(db.as_slice().expect("contiguous"));
                dy.dot(&params.tensor(w).matrix())
            }
            (LayerSpec::ReLU, _) => {
                let mut dx = dy;
                dx.zip_mut_with(x, |d, &v| {
                    if v <= 0.0 {
                        *d = 0.0
                    }
                });
                dx
            }
            (
                LayerSpec::GroupNorm {
                    num_groups, channels, ..
                },
                LayerCache::Group { xhat, inv_std },
            ) => {
                let (g, b) = two(spec.tower_slot(pos));
                let gamma = params.tensor(g).data().to_vec();
                let size = channels / num_groups;
                let mut dgamma = vec![0.0; *channels];
                let mut dbeta = vec![0.0; *channels];
                let mut dx = Array2::<f64>::zeros(dy.raw_dim());
                for r in 0..dy.nrows() {
                    for grp in 0..*num_groups {
                        let span = grp * size..(grp + 1) * size;
                        let (mut sum_d, mut sum_dh) = (0.0, 0.0);
                        for c in span.clone() {
                            let d = dy[[r, c]];
                            let h = xhat[[r, c]];
                            dgamma[c] += d * h;
                            dbeta[c] += d;
                            let dh = d * gamma[c];
                            sum_d += dh;
                            sum_dh += dh * h;
                        }
                        let m = size as f64;
                        let is = inv_std[[r, grp]];
                        for c in span {
                            let dh = dy[[r, c]] * gamma[c];
                            dx[[r, c]] = is / m * (m * dh - sum_d - xhat[[r, c]] * sum_dh);
                        }
                    }
                }
                grads.tensor_mut(g).data_mut().copy_from_slice(&dgamma);
                grads.tensor_mut(b).data_mut().copy_from_slice(&dbeta);
                dx
            }
            (LayerSpec::BatchNorm { .. }, LayerCache::Batch { xhat, inv_std, frozen }) => {
                let (g, b) = two(spec.tower_slot(pos));
                let gamma = Array1::from(params.tensor(g).data().to_vec());
                let dgamma = (&dy * xhat).sum_axis(Axis(0));
                let dbeta = dy.sum_axis(Axis(0));
                grads
                    .tensor_mut(g)
                    .data_mut()
                    .copy_from_slice(dgamma.as_slice().expect("contiguous"));
                grads
                    .tensor_mut(b)
                    .data_mut()
                    .copy_from_slice(dbeta.as_slice().expect("contiguous"));
                let dh = &dy * &gamma;
                if *frozen {
                    dh * inv_std
                } else {
                    let m = dy.nrows() as f64;
                    let sum_dh = dh.sum_axis(Axis(0));
                    let sum_dh_h = (&dh * xhat).sum_axis(Axis(0));
                    ((&dh * m) - &sum_dh - &(xhat * &sum_dh_h)) * &(inv_std / m)
                }
            }
            _ => return Err(Error::Internal(format!("cache kind mismatch at tower layer {pos}"))),
        };
    }

    for (i, input) in spec.inputs().iter().enumerate() {
        if let (InputSpec::Embedding { dim, .. }, Some((rows, col))) = (input, &pass.bags[i]) {
            let Slot::One(p) = spec.input_slot(i) else {
                unreachable!()
            };
            let mut table = grads.tensor_mut(p).matrix_mut();
            for (r, kept) in rows.iter().enumerate() {
                let scale = 1.0 / kept.len() as f64;
                let d = dy.slice(s![r, *col..*col + *dim]);
                for &idx in kept {
                    table.row_mut(idx).scaled_add(scale, &d);
                }
            }
        }
    }
    Ok(grads)
}

/// Exponential moving update of BatchNorm running statistics:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn update_running_stats(spec: &ModelSpec, running: &mut ParameterSet, pass: &ForwardPass) -> Result<()> {
    for stats in &pass.batch_stats {
        let LayerSpec::BatchNorm { momentum, .. } = spec.tower()[stats.tower_position] else {
            return Err(Error::Internal(
                "batch statistics recorded for a non-batch-norm layer".into(),
            ));
        };
        let (m, v) = spec
            .running_names(stats.tower_position)
            .expect("batch norm has running names");
        for (name, batch) in [(m, &stats.mean), (v, &stats.variance)] {
            let t: &mut Tensor = running
                .get_mut(name)
                .ok_or_else(|| Error::config(format!("missing running statistic {name}")))?;
            for (r, b) in t.data_mut().iter_mut().zip(batch.iter()) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }
    Ok(())
}
