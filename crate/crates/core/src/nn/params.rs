use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Named, ordered tensors holding one model parametrization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

/// Gradients share the parameter layout.
pub type GradientSet = ParameterSet;

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::config(format!("duplicate parameter name {name:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::config(format!("duplicate parameter name {name:?}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Total number of scalar values across all entries.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Same names in the same order with the same shapes.
    pub fn is_congruent(&self, other: &ParameterSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }

    pub fn ensure_congruent(&self, other: &ParameterSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::config(format!(
                "parameter sets differ in entry count: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::config(format!(
                    "parameter mismatch: {na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// A congruent set with every value zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().flat_map(|(_, t)| t.data().iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.entries.iter_mut().flat_map(|(_, t)| t.data_mut().iter_mut())
    }

    /// `self += scale * other`, element-wise.
    pub fn add_scaled(&mut self, other: &ParameterSet, scale: f64) -> Result<()> {
        self.ensure_congruent(other)?;
        for ((_, dst), (_, src)) in self.entries.iter_mut().zip(&other.entries) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += scale * s;
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ParameterSet) -> Result<f64> {
        self.ensure_congruent(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

/// Plain SGD: `w' = w - eta * g` for every weight.
pub fn sgd_step(params: &ParameterSet, grads: &GradientSet, eta: f64) -> Result<ParameterSet> {
    let mut next = params.clone();
    sgd_step_in_place(&mut next, grads, eta)?;
    Ok(next)
}

pub fn sgd_step_in_place(params: &mut ParameterSet, grads: &GradientSet, eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::config(format!(
            "learning rate must be finite and >= 0, got {eta}"
        )));
    }
    params.add_scaled(grads, -eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParameterSet {
        ParameterSet::from_entries(vec![("w".into(), Tensor::scalar(value))]).unwrap()
    }

    #[test]
    fn sgd_single_step_arithmetic() {
        let next = sgd_step(&single(1.0), &single(0.5), 0.1).unwrap();
        assert!((next.tensor(0).data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_or_rate_is_identity() {
        let p = single(1.25);
        assert_eq!(sgd_step(&p, &single(0.0), 0.3).unwrap(), p);
        assert_eq!(sgd_step(&p, &single(7.0), 0.0).unwrap(), p);
    }

    #[test]
    fn sgd_rejects_mismatch_and_negative_rate() {
        let p = single(1.0);
        let other = ParameterSet::from_entries(vec![("v".into(), Tensor::scalar(1.0))]).unwrap();
        assert!(matches!(sgd_step(&p, &other, 0.1), Err(Error::Config(_))));
        assert!(sgd_step(&p, &single(1.0), -0.1).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = ParameterSet::from_entries(vec![
            ("a".into(), Tensor::scalar(1.0)),
            ("a".into(), Tensor::scalar(2.0)),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }
}
