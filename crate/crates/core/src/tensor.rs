//! Dense f64 tensors (row-major), the value type shared by the tape, the
//! optimizer, and model parameters.

use crate::error::{Error, Result};

/// A dense n-dimensional array of 64-bit floats.
///
/// Parameters carry a persistent gradient buffer (`requires_grad` true);
/// plain data tensors do not. Participation in a differentiation graph is
/// handled by [`crate::tape::Tape`], which hands out node ids when a tensor
/// is registered as a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    /// A data tensor (no gradient tracking).
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::contract(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                values.len()
            )));
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
            requires_grad: false,
        })
    }

    /// A trainable parameter with a zeroed gradient buffer.
    pub fn param(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let mut t = Tensor::new(shape, values)?;
        t.grad = Some(vec![0.0; t.values.len()]);
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    /// A 1-row matrix, convenient for single-sample examples.
    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor {
            shape: vec![1, n],
            values,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Rows/cols of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::contract(format!("expected rank-2 shape, got {other:?}"))),
        }
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.values[0])
        } else {
            Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Adds `delta` into the gradient buffer. Only valid on parameters.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        let grad = self
            .grad
            .as_mut()
            .ok_or_else(|| Error::contract("accumulate_grad on a tensor without a grad buffer"))?;
        if grad.len() != delta.len() {
            return Err(Error::contract(format!(
                "gradient length {} does not match parameter length {}",
                delta.len(),
                grad.len()
            )));
        }
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }
}
