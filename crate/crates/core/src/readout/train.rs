use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Optimizer, OptimizerKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// Softmax over the score vector, mean negative log-likelihood.
    CrossEntropy,
    /// Sigmoid of each score against a target in `[0, 1]`, mean squared error.
    Mse,
}

impl FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cross-entropy" | "ce" => Ok(Loss::CrossEntropy),
            "mse" => Ok(Loss::Mse),
            _ => Err(format!("unknown loss `{s}`")),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::CrossEntropy => "cross-entropy",
            Loss::Mse => "mse",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes(Vec<usize>),
    /// One scalar target per sample.
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn gather(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes(c) => Labels::Classes(idx.iter().map(|&i| c[i]).collect()),
            Labels::Values(v) => Labels::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// Samples stored one per row: `inputs` has shape `(n, input_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Labels,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Labels) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Validation(format!(
                "{} inputs but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Column-stacked batch `(dim, idx.len())` and its labels.
    pub fn batch(&self, idx: &[usize]) -> (Array2<f64>, Labels) {
        let x = self.inputs.select(Axis(0), idx).reversed_axes();
        (x.as_standard_layout().into_owned(), self.labels.gather(idx))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            labels: self.labels.gather(idx),
        }
    }
}

/// Logistic function without overflow for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Loss {
    /// Mean loss over the batch and its gradient with respect to `scores`.
    pub fn evaluate(self, scores: ArrayView2<f64>, labels: &Labels) -> Result<(f64, Array2<f64>)> {
        let (dim, batch) = scores.dim();
        let mut grad = Array2::zeros((dim, batch));
        let mut total = 0.0;
        let inv = 1.0 / batch as f64;
        match (self, labels) {
            (Loss::CrossEntropy, Labels::Classes(c)) => {
                for j in 0..batch {
                    let col = scores.column(j);
                    if c[j] >= dim {
                        return Err(Error::Validation(format!("class {} outside {dim} scores", c[j])));
                    }
                    let max = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let z: f64 = col.iter().map(|&v| (v - max).exp()).sum();
                    total += z.ln() + max - col[c[j]];
                    for k in 0..dim {
                        let p = (col[k] - max).exp() / z;
                        grad[[k, j]] = (p - if k == c[j] { 1.0 } else { 0.0 }) * inv;
                    }
                }
            }
            (Loss::Mse, Labels::Values(v)) => {
                if dim != 1 {
                    return Err(Error::Contract(format!("mse head expects one output, got {dim}")));
                }
                for j in 0..batch {
                    let y = sigmoid(scores[[0, j]]);
                    let d = y - v[j];
                    total += d * d;
                    grad[[0, j]] = 2.0 * d * y * (1.0 - y) * inv;
                }
            }
            _ => return Err(Error::Contract(format!("loss {self} does not match label kind"))),
        }
        Ok((total * inv, grad))
    }

    /// Maps raw scores to predictions (probabilities for the sigmoid head).
    pub fn link(self, scores: &mut Array2<f64>) {
        if self == Loss::Mse {
            scores.mapv_inplace(sigmoid);
        }
    }
}

/// A model whose trainable tensors can be updated in place.
pub trait Trainable {
    /// Scores of shape `(output_dim, batch)` for inputs `(input_dim, batch)`.
    fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Runs forward, asks `loss` for the score gradient, and returns the
    /// loss with one flat gradient per tensor of `params_mut`.
    fn forward_backward(
        &self,
        x: ArrayView2<f64>,
        loss: &mut dyn FnMut(ArrayView2<f64>) -> Result<(f64, Array2<f64>)>,
    ) -> Result<(f64, Vec<Vec<f64>>)>;

    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn trainable_param_count(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            loss: Loss::CrossEntropy,
            optimizer: OptimizerKind::Adam,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
}

/// Minibatch training with a per-epoch shuffle drawn from `config.seed`.
/// `on_epoch` sees the model after every epoch.
pub fn train<M: Trainable>(
    model: &mut M,
    data: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &M, f64),
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, config.weight_decay);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (x, labels) = data.batch(chunk);
            let mut loss_fn = |s: ArrayView2<f64>| config.loss.evaluate(s, &labels);
            let (loss, grads) = model.forward_backward(x.view(), &mut loss_fn)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    loss,
                    step,
                    learning_rate: config.learning_rate,
                });
            }
            opt.step(model.params_mut(), &grads);
            sum += loss * chunk.len() as f64;
            step += 1;
        }
        let mean = sum / data.len() as f64;
        curve.push(mean);
        log::debug!("epoch {epoch}: loss {mean:.6}");
        on_epoch(epoch, model, mean);
    }
    Ok(TrainReport { loss_curve: curve, steps: step })
}

/// Predictions `(output_dim, n)` after the loss link, in chunks of `batch`.
pub fn predict<M: Trainable>(model: &M, data: &Dataset, loss: Loss, batch: usize) -> Result<Array2<f64>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut cols = Vec::new();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, _) = data.batch(chunk);
        let mut s = model.forward(x.view())?;
        loss.link(&mut s);
        cols.push(s);
    }
    let views: Vec<_> = cols.iter().map(|c| c.view()).collect();
    Ok(ndarray::concatenate(Axis(1), &views).expect("matching output dim"))
}

/// Top-1 accuracy in `[0, 1]` for class labels, mean squared error for values.
pub fn evaluate<M: Trainable>(model: &M, data: &Dataset, loss: Loss) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Validation("evaluation set is empty".into()));
    }
    let preds = predict(model, data, loss, 512)?;
    Ok(match &data.labels {
        Labels::Classes(c) => {
            let correct = c
                .iter()
                .enumerate()
                .filter(|&(j, &label)| argmax(preds.column(j).iter().copied()) == label)
                .count();
            correct as f64 / c.len() as f64
        }
        Labels::Values(v) => {
            v.iter()
                .enumerate()
                .map(|(j, &t)| (preds[[0, j]] - t).powi(2))
                .sum::<f64>()
                / v.len() as f64
        }
    })
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cross_entropy_by_hand() {
        let s = array![[0.0], [0.0]];
        let (l, g) = Loss::CrossEntropy.evaluate(s.view(), &Labels::Classes(vec![1])).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, array![[0.5], [-0.5]]);
    }

    #[test]
    fn mse_at_zero_score() {
        let s = array![[0.0, 0.0]];
        let (l, g) = Loss::Mse.evaluate(s.view(), &Labels::Values(vec![1.0, 0.5])).unwrap();
        assert!((l - 0.125).abs() < 1e-15);
        assert!((g[[0, 0]] + 0.125).abs() < 1e-15 && g[[0, 1]] == 0.0);
    }

    #[test]
    fn mismatched_loss_and_labels() {
        let s = array![[0.0]];
        assert!(Loss::Mse.evaluate(s.view(), &Labels::Classes(vec![0])).is_err());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax([1.0, 3.0, 3.0].into_iter()), 1);
    }
}
