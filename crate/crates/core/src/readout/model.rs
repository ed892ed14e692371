use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::projection::LinearProjection;
use super::train::Trainable;
use crate::error::{Error, Result};
use crate::reservoir::{BpuConfig, Reservoir, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutInit {
    Uniform,
    /// All-zero output weights and bias; a sigmoid head then starts at 0.5.
    Zero,
}

/// Input projection into (a subset of) the sensory pool, frozen reservoir,
/// output projection from the reservoir features.
#[derive(Debug, Clone)]
pub struct BpuModel {
    pub input: LinearProjection,
    /// Sensory-pool positions the input projection writes to, one per row.
    pub targets: Vec<usize>,
    pub reservoir: Arc<Reservoir>,
    pub output: LinearProjection,
    pub config: BpuConfig,
}

impl BpuModel {
    /// `targets = None` drives every sensory neuron.
    pub fn new(
        reservoir: Arc<Reservoir>,
        config: BpuConfig,
        input_dim: usize,
        output_dim: usize,
        targets: Option<Vec<usize>>,
        output_init: ReadoutInit,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let sensory = reservoir.sizes()[0];
        let targets = targets.unwrap_or_else(|| (0..sensory).collect());
        if targets.is_empty() {
            return Err(Error::Validation("input projection needs at least one target neuron".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= sensory) {
            return Err(Error::Validation(format!("target {bad} outside the sensory pool of {sensory}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = LinearProjection::uniform(targets.len(), input_dim, true, &mut rng);
        let feat = reservoir.feature_dim(&config);
        let output = match output_init {
            ReadoutInit::Uniform => LinearProjection::uniform(output_dim, feat, true, &mut rng),
            ReadoutInit::Zero => LinearProjection::zeros(output_dim, feat, true),
        };
        Ok(BpuModel {
            input,
            targets,
            reservoir,
            output,
            config,
        })
    }

    fn external_input(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let proj = self.input.forward(x)?;
        if self.targets.len() == self.reservoir.sizes()[0] && self.targets.iter().enumerate().all(|(i, &t)| i == t) {
            return Ok(proj);
        }
        let mut e = Array2::zeros((self.reservoir.sizes()[0], x.ncols()));
        for (row, &t) in self.targets.iter().enumerate() {
            e.row_mut(t).assign(&proj.row(row));
        }
        Ok(e)
    }

    /// Full unroll for a single input vector.
    pub fn trajectory(&self, x: ArrayView1<f64>) -> Result<Trajectory> {
        let col = x.insert_axis(Axis(1));
        let e = self.external_input(col)?;
        self.reservoir.run(e.column(0), &self.config)
    }

    /// Reservoir features `(feature_dim, batch)` for inputs `(input_dim, batch)`.
    pub fn features(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let e = self.external_input(x)?;
        let traj = self.reservoir.run_batch(e.view(), &self.config)?;
        Ok(self.reservoir.features_batch(&traj, self.config.readout_mode))
    }
}

impl Trainable for BpuModel {
    fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = self.features(x)?;
        self.output.forward(f.view())
    }

    fn forward_backward(
        &self,
        x: ArrayView2<f64>,
        loss: &mut dyn FnMut(ArrayView2<f64>) -> Result<(f64, Array2<f64>)>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let e = self.external_input(x)?;
        let traj = self.reservoir.run_batch(e.view(), &self.config)?;
        let feats = self.reservoir.features_batch(&traj, self.config.readout_mode);
        let scores = self.output.forward(feats.view())?;
        let (value, g_scores) = loss(scores.view())?;

        let (gw_out, gb_out) = self.output.param_grads(feats.view(), g_scores.view());
        let g_feats = self.output.input_grad(g_scores.view());
        let g_e = self
            .reservoir
            .backward_batch(&traj, g_feats.view(), self.config.readout_mode)?;
        let g_proj = g_e.select(Axis(0), &self.targets);
        let (gw_in, gb_in) = self.input.param_grads(x, g_proj.view());
        Ok((
            value,
            vec![
                gw_in,
                gb_in.expect("input bias"),
                gw_out,
                gb_out.expect("output bias"),
            ],
        ))
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.input.params_mut();
        p.extend(self.output.params_mut());
        p
    }

    fn trainable_param_count(&self) -> usize {
        self.input.param_count() + self.output.param_count()
    }
}

/// Trainable parameters of a BPU model: `k*d + k + c*f + c`.
pub fn bpu_param_count(input_dim: usize, targets: usize, feature_dim: usize, output_dim: usize) -> usize {
    input_dim * targets + targets + feature_dim * output_dim + output_dim
}
