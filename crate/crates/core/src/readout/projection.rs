use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Dense affine map `y = W x + b` applied to column-stacked batches.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    pub weights: Array2<f64>,
    pub bias: Option<Array1<f64>>,
}

impl LinearProjection {
    pub fn zeros(out_dim: usize, in_dim: usize, bias: bool) -> Self {
        LinearProjection {
            weights: Array2::zeros((out_dim, in_dim)),
            bias: bias.then(|| Array1::zeros(out_dim)),
        }
    }

    /// Weights uniform on `[-1/sqrt(in), 1/sqrt(in)]`, zero bias.
    pub fn uniform<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, bias: bool, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        LinearProjection {
            weights: Array2::from_shape_simple_fn((out_dim, in_dim), || dist.sample(rng)),
            bias: bias.then(|| Array1::zeros(out_dim)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.as_ref().map_or(0, |b| b.len())
    }

    /// `x` has shape `(in_dim, batch)`; returns `(out_dim, batch)`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.in_dim() {
            return Err(Error::Contract(format!(
                "projection expects input dimension {}, got {}",
                self.in_dim(),
                x.nrows()
            )));
        }
        let mut y = self.weights.dot(&x);
        if let Some(b) = &self.bias {
            y += &b.view().insert_axis(Axis(1));
        }
        Ok(y)
    }

    /// Parameter gradients for upstream gradient `g` of shape `(out_dim, batch)`,
    /// flattened as `[weights (row-major), bias]`.
    pub fn param_grads(&self, x: ArrayView2<f64>, g: ArrayView2<f64>) -> (Vec<f64>, Option<Vec<f64>>) {
        let gw = g.dot(&x.t());
        let gb = self.bias.as_ref().map(|_| g.sum_axis(Axis(1)).to_vec());
        (gw.iter().copied().collect(), gb)
    }

    /// Gradient with respect to the input, shape `(in_dim, batch)`.
    pub fn input_grad(&self, g: ArrayView2<f64>) -> Array2<f64> {
        self.weights.t().dot(&g)
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.weights.as_slice_mut().expect("standard layout")];
        if let Some(b) = &mut self.bias {
            out.push(b.as_slice_mut().expect("contiguous"));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter().flatten()).all(|v| v.is_finite())
    }
}
