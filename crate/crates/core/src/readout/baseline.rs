use ndarray::{Array2, ArrayView2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::projection::LinearProjection;
use super::train::Trainable;
use crate::error::{Error, Result};

/// Hidden widths chosen to match a parameter budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub h1: usize,
    pub h2: usize,
    /// Target minus achieved trainable parameter count (never negative).
    pub residual: usize,
}

/// Trainable count of the baseline: `d*h1 + h1 + h2*c + c`.
pub fn baseline_param_count(input_dim: usize, output_dim: usize, h1: usize, h2: usize) -> usize {
    input_dim * h1 + h1 + h2 * output_dim + output_dim
}

/// Minimizes the residual, then `|h1 - h2|`, then `h1`, over counts not
/// exceeding `target`. Fails if the best residual is 0.5% of the target or more.
pub fn solve_widths(input_dim: usize, output_dim: usize, target: usize) -> Result<Widths> {
    let (d, c) = (input_dim, output_dim);
    let mut best: Option<(usize, usize, usize, usize)> = None;
    let mut h1 = 1;
    while d * h1 + h1 + c + c <= target {
        let h2 = (target - d * h1 - h1 - c) / c;
        if h2 >= 1 {
            let residual = target - baseline_param_count(d, c, h1, h2);
            let key = (residual, h1.abs_diff(h2), h1, h2);
            if best.is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                best = Some(key);
            }
        }
        h1 += 1;
    }
    let (residual, _, h1, h2) =
        best.ok_or_else(|| Error::Validation(format!("no hidden widths fit a budget of {target} parameters")))?;
    if residual as f64 >= 0.005 * target as f64 {
        return Err(Error::Validation(format!(
            "closest baseline misses the budget of {target} by {residual} parameters"
        )));
    }
    Ok(Widths { h1, h2, residual })
}

/// `x -> relu(W1 x + b1) -> relu(M h) -> W3 h + b3` with `M` frozen.
#[derive(Debug, Clone)]
pub struct BaselineMlp {
    pub first: LinearProjection,
    middle: Array2<f64>,
    pub last: LinearProjection,
    pub widths: Widths,
}

impl BaselineMlp {
    pub fn build(input_dim: usize, output_dim: usize, bpu_param_count: usize, seed: u64) -> Result<Self> {
        let widths = solve_widths(input_dim, output_dim, bpu_param_count)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = LinearProjection::uniform(widths.h1, input_dim, true, &mut rng);
        let bound = 1.0 / (widths.h1 as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let middle = Array2::from_shape_simple_fn((widths.h2, widths.h1), || dist.sample(&mut rng));
        let last = LinearProjection::uniform(output_dim, widths.h2, true, &mut rng);
        Ok(BaselineMlp {
            first,
            middle,
            last,
            widths,
        })
    }

    pub fn middle(&self) -> &Array2<f64> {
        &self.middle
    }

    pub fn middle_checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.middle {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn hidden(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let mut h1 = self.first.forward(x)?;
        h1.mapv_inplace(|v| v.max(0.0));
        let mut h2 = self.middle.dot(&h1);
        h2.mapv_inplace(|v| v.max(0.0));
        Ok((h1, h2))
    }
}

impl Trainable for BaselineMlp {
    fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (_, h2) = self.hidden(x)?;
        self.last.forward(h2.view())
    }

    fn forward_backward(
        &self,
        x: ArrayView2<f64>,
        loss: &mut dyn FnMut(ArrayView2<f64>) -> Result<(f64, Array2<f64>)>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let (h1, h2) = self.hidden(x)?;
        let scores = self.last.forward(h2.view())?;
        let (value, g) = loss(scores.view())?;
        let (gw3, gb3) = self.last.param_grads(h2.view(), g.view());
        let mut g2 = self.last.input_grad(g.view());
        Zip::from(&mut g2).and(&h2).for_each(|g, &h| {
            if h <= 0.0 {
                *g = 0.0;
            }
        });
        let mut g1 = self.middle.t().dot(&g2);
        Zip::from(&mut g1).and(&h1).for_each(|g, &h| {
            if h <= 0.0 {
                *g = 0.0;
            }
        });
        let (gw1, gb1) = self.first.param_grads(x, g1.view());
        Ok((value, vec![gw1, gb1.expect("bias"), gw3, gb3.expect("bias")]))
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.first.params_mut();
        p.extend(self.last.params_mut());
        p
    }

    fn trainable_param_count(&self) -> usize {
        self.first.param_count() + self.last.param_count()
    }
}
