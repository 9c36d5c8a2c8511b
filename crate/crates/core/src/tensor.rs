//! Dense n-dimensional `f64` tensor, row-major.
//!
//! `Tensor` is the universal value carrier for weights, activations, masks and
//! gradients. It is deliberately minimal: a shape plus a flat `Vec<f64>`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::ShapeMismatch {
                what: format!("tensor with {} values", values.len()),
                expected: shape.to_vec(),
                got: vec![values.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
        })
    }

    /// All-ones tensor with the same shape as `other`.
    pub fn ones_like(other: &Tensor) -> Self {
        Tensor {
            shape: other.shape.clone(),
            values: vec![1.0; other.values.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Reinterprets the flat buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.values.clone())
    }

    /// Errors if any value is NaN or infinite.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!(
                "{what} has non-finite value at flat index {i}"
            ))),
        }
    }

    /// Row-major flat index for a 2-D tensor.
    #[inline]
    pub fn idx2(&self, r: usize, c: usize) -> usize {
        r * self.shape[1] + c
    }

    /// One row of a 2-D tensor as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.shape[1];
        &self.values[r * w..(r + 1) * w]
    }
}
