use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Tensor};

/// Step size for quantization parameter `qp`: the low `f_qp` bits of `qp`
/// pick a mantissa in `[1, 2)` (in units of `2^-f_qp`) and the remaining
/// bits an exponent, so every `2^f_qp` steps of `qp` double `δ`.
///
/// `m = (1 << f) + (qp & ((1 << f) - 1))`, `s = qp >> f`, `δ = m · 2^(s - f)`.
pub fn step_size(qp: i32, f_qp: u32) -> f64 {
    assert!(f_qp < 31, "f_qp {f_qp} too large");
    let one = 1i64 << f_qp;
    let m = one + (i64::from(qp) & (one - 1));
    let s = i64::from(qp) >> f_qp;
    m as f64 * 2f64.powi((s - i64::from(f_qp)) as i32)
}

/// The step-size rule read with `+` in place of the bit mask:
/// `m = (1 << f) + (qp + ((1 << f) - 1))`. Non-positive results are errors.
pub fn step_size_literal(qp: i32, f_qp: u32) -> Result<f64> {
    assert!(f_qp < 31, "f_qp {f_qp} too large");
    let one = 1i64 << f_qp;
    let m = one + (i64::from(qp) + (one - 1));
    let s = i64::from(qp) >> f_qp;
    let delta = m as f64 * 2f64.powi((s - i64::from(f_qp)) as i32);
    if delta > 0.0 {
        Ok(delta)
    } else {
        Err(Error::config(format!(
            "literal step rule gives δ = {delta} for qp {qp}, f_qp {f_qp}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    pub qp: i32,
    pub f_qp: u32,
    /// Added to `qp` for the named tensors.
    pub per_tensor_qp_offset: BTreeMap<String, i32>,
    /// Use [`step_size_literal`] instead of [`step_size`].
    pub literal_step_rule: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            qp: -30,
            f_qp: 2,
            per_tensor_qp_offset: BTreeMap::new(),
            literal_step_rule: false,
        }
    }
}

impl QuantConfig {
    pub fn qp_for(&self, tensor: &str) -> i32 {
        self.qp + self.per_tensor_qp_offset.get(tensor).copied().unwrap_or(0)
    }

    pub fn step_for(&self, tensor: &str) -> Result<f64> {
        if self.f_qp >= 31 {
            return Err(Error::config(format!("f_qp {} must be < 31", self.f_qp)));
        }
        let qp = self.qp_for(tensor);
        if self.literal_step_rule {
            step_size_literal(qp, self.f_qp)
        } else {
            Ok(step_size(qp, self.f_qp))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub qp: i32,
    pub step_size: f64,
    pub indices: Vec<i32>,
}

/// `index = round(x / δ)`, ties away from zero.
pub fn quantize(name: &str, tensor: &Tensor, qp: i32, step: f64) -> Result<QuantizedTensor> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Argument(format!("step size must be positive, got {step}")));
    }
    let indices = tensor
        .data()
        .iter()
        .map(|&x| {
            let q = (x / step).round();
            if !q.is_finite() || q < f64::from(i32::MIN) || q > f64::from(i32::MAX) {
                return Err(Error::Encoding(format!(
                    "{name}: value {x} at step {step} does not fit a 32-bit index"
                )));
            }
            Ok(q as i32)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantizedTensor {
        name: name.to_string(),
        shape: tensor.shape().to_vec(),
        qp,
        step_size: step,
        indices,
    })
}

pub fn dequantize(q: &QuantizedTensor) -> Result<Tensor> {
    Tensor::new(
        q.shape.clone(),
        q.indices.iter().map(|&i| f64::from(i) * q.step_size).collect(),
    )
}

pub fn quantize_model(params: &ParameterSet, config: &QuantConfig) -> Result<Vec<QuantizedTensor>> {
    params
        .iter()
        .map(|(name, t)| quantize(name, t, config.qp_for(name), config.step_for(name)?))
        .collect()
}

pub fn dequantize_model(tensors: &[QuantizedTensor]) -> Result<ParameterSet> {
    ParameterSet::from_entries(
        tensors
            .iter()
            .map(|q| Ok((q.name.clone(), dequantize(q)?)))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// `1 − compressed / uncompressed`.
pub fn space_saving(uncompressed_bytes: u64, compressed_bytes: u64) -> Result<f64> {
    if uncompressed_bytes == 0 {
        return Err(Error::Argument("uncompressed size must be positive".into()));
    }
    Ok(1.0 - compressed_bytes as f64 / uncompressed_bytes as f64)
}

/// Empirical Shannon entropy of the index histogram, in bits per index.
pub fn weight_entropy<'a>(tensors: impl IntoIterator<Item = &'a QuantizedTensor>) -> Result<f64> {
    let mut counts: HashMap<i32, u64> = HashMap::new();
    let mut n = 0u64;
    for t in tensors {
        for &i in &t.indices {
            *counts.entry(i).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Argument("entropy of an empty index set".into()));
    }
    let mut sorted: Vec<u64> = counts.into_values().collect();
    sorted.sort_unstable();
    let n = n as f64;
    Ok(sorted
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_size_values() {
        for f in 0..4 {
            assert_eq!(step_size(0, f), 1.0);
        }
        assert_eq!(step_size(-30, 2), 0.005859375);
        assert_eq!(step_size(-30, 2), 6.0 * 2f64.powi(-10));
        assert_eq!(step_size(-48, 2), 4.0 * 2f64.powi(-14));
        assert_eq!(step_size(4, 2), 2.0);
    }

    #[test]
    fn literal_rule_breaks_for_negative_qp() {
        assert_eq!(step_size_literal(0, 2).unwrap(), 7.0 / 4.0);
        assert!(step_size_literal(-30, 2).is_err());
    }

    #[test]
    fn quantize_basics() {
        let t = Tensor::new(vec![4], vec![0.0, 0.25, -0.25, 0.125]).unwrap();
        let q = quantize("t", &t, 0, 0.25).unwrap();
        assert_eq!(q.indices, vec![0, 1, -1, 1]);
        let t = Tensor::new(vec![2], vec![0.375, -0.375]).unwrap();
        assert_eq!(quantize("t", &t, 0, 0.25).unwrap().indices, vec![2, -2]);
    }

    #[test]
    fn overflow_is_an_encoding_error() {
        let t = Tensor::new(vec![1], vec![1e10]).unwrap();
        assert!(matches!(quantize("t", &t, 0, 1e-3), Err(Error::Encoding(_))));
    }

    #[test]
    fn entropy_closed_forms() {
        let q = |indices: Vec<i32>| QuantizedTensor {
            name: "t".into(),
            shape: vec![indices.len()],
            qp: 0,
            step_size: 1.0,
            indices,
        };
        assert_eq!(weight_entropy([&q(vec![3; 10])]).unwrap(), 0.0);
        assert!((weight_entropy([&q(vec![1, 2, 1, 2])]).unwrap() - 1.0).abs() < 1e-12);
        assert!((weight_entropy([&q((0..256).collect())]).unwrap() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn space_saving_values() {
        assert_eq!(space_saving(100, 100).unwrap(), 0.0);
        assert_eq!(space_saving(100, 25).unwrap(), 0.75);
        assert!(space_saving(0, 1).is_err());
    }
}
