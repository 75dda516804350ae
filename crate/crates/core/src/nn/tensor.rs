use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// Dense row-major float64 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::config(format!("tensor shape {shape:?} has a zero dimension")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::config(format!(
                "tensor shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rank-2 view; panics on other ranks, which the layer code never builds.
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        assert_eq!(self.shape.len(), 2, "matrix view of rank-{} tensor", self.shape.len());
        ArrayView2::from_shape((self.shape[0], self.shape[1]), &self.data).expect("shape checked")
    }

    pub fn matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        assert_eq!(self.shape.len(), 2, "matrix view of rank-{} tensor", self.shape.len());
        ArrayViewMut2::from_shape((self.shape[0], self.shape[1]), &mut self.data).expect("shape checked")
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
