//! Frozen BPU dynamics and reverse-mode gradients through the unroll.
//!
//! ```text
//! S' = f(W_ss S + W_rs I + W_os O + E)
//! I' = f(W_sr S + W_rr I + W_or O)
//! O' = f(W_so S + W_ro I + W_oo O)
//! ```
//!
//! `W_xy` maps pool `x` to pool `y`. All batched arrays are column-stacked:
//! shape `(pool_dim, batch)`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectome::{Pool, SignedConnectome};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the activation `a = f(z)`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(format!("unknown activation `{s}`")),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutMode {
    /// `O(T)`.
    OutputFinal,
    /// `S(T) ‖ I(T) ‖ O(T)`.
    AllFinal,
    /// `O(1) ‖ … ‖ O(T)`.
    OutputTrajectory,
}

impl FromStr for ReadoutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "output-final" => Ok(ReadoutMode::OutputFinal),
            "all-final" => Ok(ReadoutMode::AllFinal),
            "output-trajectory" => Ok(ReadoutMode::OutputTrajectory),
            _ => Err(format!("unknown readout mode `{s}`")),
        }
    }
}

impl fmt::Display for ReadoutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReadoutMode::OutputFinal => "output-final",
            ReadoutMode::AllFinal => "all-final",
            ReadoutMode::OutputTrajectory => "output-trajectory",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BpuConfig {
    pub steps: usize,
    pub activation: Activation,
    pub readout_mode: ReadoutMode,
}

impl Default for BpuConfig {
    fn default() -> Self {
        BpuConfig {
            steps: 5,
            activation: Activation::Relu,
            readout_mode: ReadoutMode::OutputFinal,
        }
    }
}

impl BpuConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Validation("reservoir steps T must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpuState {
    pub s: Array1<f64>,
    pub i: Array1<f64>,
    pub o: Array1<f64>,
}

impl BpuState {
    pub fn zeros(sizes: [usize; 3]) -> Self {
        BpuState {
            s: Array1::zeros(sizes[0]),
            i: Array1::zeros(sizes[1]),
            o: Array1::zeros(sizes[2]),
        }
    }

    pub fn pool(&self, pool: Pool) -> &Array1<f64> {
        match pool {
            Pool::Sensory => &self.s,
            Pool::Internal => &self.i,
            Pool::Output => &self.o,
        }
    }

    fn from_batch(b: &BatchState, col: usize) -> Self {
        BpuState {
            s: b.pools[0].column(col).to_owned(),
            i: b.pools[1].column(col).to_owned(),
            o: b.pools[2].column(col).to_owned(),
        }
    }

    fn to_batch(&self) -> BatchState {
        let col = |a: &Array1<f64>| a.clone().insert_axis(Axis(1));
        BatchState {
            pools: [col(&self.s), col(&self.i), col(&self.o)],
        }
    }
}

/// Column-stacked pool activations for a batch of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchState {
    pub pools: [Array2<f64>; 3],
}

impl BatchState {
    pub fn zeros(sizes: [usize; 3], batch: usize) -> Self {
        BatchState {
            pools: sizes.map(|n| Array2::zeros((n, batch))),
        }
    }

    pub fn batch(&self) -> usize {
        self.pools[0].ncols()
    }

    fn is_finite(&self) -> bool {
        self.pools.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// States `t = 0..=T` of a single sample, plus pre-activations for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<BpuState>,
    pre: Vec<BpuState>,
    activation: Activation,
}

impl Trajectory {
    /// A trajectory without stored pre-activations; `backward` rejects it.
    pub fn from_states(states: Vec<BpuState>, activation: Activation) -> Self {
        Trajectory {
            states,
            pre: Vec::new(),
            activation,
        }
    }

    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// Long-format CSV: `t,pool,index,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,pool,index,value\n");
        for (t, st) in self.states.iter().enumerate() {
            for pool in Pool::ALL {
                for (k, v) in st.pool(pool).iter().enumerate() {
                    out.push_str(&format!("{t},{pool},{k},{v}\n"));
                }
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Batched trajectory with pre-activations retained for backward.
#[derive(Debug, Clone)]
pub struct BatchTrajectory {
    pub states: Vec<BatchState>,
    pre: Vec<BatchState>,
    activation: Activation,
}

impl BatchTrajectory {
    pub fn batch(&self) -> usize {
        self.states[0].batch()
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }
}

/// Frozen recurrent core: the nine pool blocks and their transposes.
#[derive(Debug, Clone)]
pub struct Reservoir {
    sizes: [usize; 3],
    /// `blocks[from * 3 + to]`, shape `(|to|, |from|)`.
    blocks: Vec<CsrMatrix>,
    transposed: Vec<CsrMatrix>,
}

impl Reservoir {
    pub fn new(c: &SignedConnectome) -> Self {
        let mut blocks = Vec::with_capacity(9);
        for from in Pool::ALL {
            for to in Pool::ALL {
                blocks.push(c.block(from, to));
            }
        }
        Self::from_blocks(c.pool_sizes(), blocks)
    }

    /// `blocks` ordered `from * 3 + to`, each of shape `(|to|, |from|)`.
    pub fn from_blocks(sizes: [usize; 3], blocks: Vec<CsrMatrix>) -> Self {
        assert_eq!(blocks.len(), 9, "need nine pool blocks");
        for from in 0..3 {
            for to in 0..3 {
                let b = &blocks[from * 3 + to];
                assert_eq!((b.rows(), b.cols()), (sizes[to], sizes[from]), "block {from}->{to} shape");
            }
        }
        let transposed = blocks.iter().map(CsrMatrix::transpose).collect();
        Reservoir {
            sizes,
            blocks,
            transposed,
        }
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    pub fn block(&self, from: Pool, to: Pool) -> &CsrMatrix {
        &self.blocks[from.index() * 3 + to.index()]
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(CsrMatrix::nnz).sum()
    }

    /// SHA-256 over every block's shape and exact weight bits.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for b in &self.blocks {
            h.update((b.rows() as u64).to_le_bytes());
            h.update((b.cols() as u64).to_le_bytes());
            for (r, c, v) in b.iter() {
                h.update((r as u64).to_le_bytes());
                h.update((c as u64).to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn feature_dim(&self, cfg: &BpuConfig) -> usize {
        match cfg.readout_mode {
            ReadoutMode::OutputFinal => self.sizes[2],
            ReadoutMode::AllFinal => self.sizes.iter().sum(),
            ReadoutMode::OutputTrajectory => cfg.steps * self.sizes[2],
        }
    }

    fn pre_activation(&self, state: &BatchState, e: Option<ArrayView2<f64>>) -> BatchState {
        let batch = state.batch();
        let mut pre = BatchState::zeros(self.sizes, batch);
        for to in 0..3 {
            for from in 0..3 {
                let b = &self.blocks[from * 3 + to];
                if !b.is_empty() {
                    b.mul_batch_acc(state.pools[from].view(), pre.pools[to].view_mut());
                }
            }
        }
        if let Some(e) = e {
            pre.pools[0] += &e;
        }
        pre
    }

    fn check_state(&self, state: &BatchState) -> Result<()> {
        for (k, p) in state.pools.iter().enumerate() {
            if p.nrows() != self.sizes[k] {
                return Err(Error::Contract(format!(
                    "{} state has {} rows, pool has {}",
                    Pool::from_index(k),
                    p.nrows(),
                    self.sizes[k]
                )));
            }
        }
        Ok(())
    }

    /// One update of all three pools with external input `e` on the sensory pool.
    pub fn step(&self, state: &BpuState, e: ArrayView1<f64>, activation: Activation) -> Result<BpuState> {
        if e.len() != self.sizes[0] {
            return Err(Error::Contract(format!(
                "external input has dimension {}, sensory pool has {}",
                e.len(),
                self.sizes[0]
            )));
        }
        let batch = state.to_batch();
        self.check_state(&batch)?;
        let e2 = e.insert_axis(Axis(1));
        let mut next = self.pre_activation(&batch, Some(e2));
        for p in &mut next.pools {
            p.mapv_inplace(|x| activation.apply(x));
        }
        Ok(BpuState::from_batch(&next, 0))
    }

    /// Unroll from the zero state with `e0` injected at `t = 0` only.
    pub fn run(&self, e0: ArrayView1<f64>, cfg: &BpuConfig) -> Result<Trajectory> {
        let traj = self.run_batch(e0.insert_axis(Axis(1)), cfg)?;
        Ok(Trajectory {
            states: traj.states.iter().map(|s| BpuState::from_batch(s, 0)).collect(),
            pre: traj.pre.iter().map(|s| BpuState::from_batch(s, 0)).collect(),
            activation: traj.activation,
        })
    }

    /// Batched unroll; `e0` has shape `(|sensory|, batch)`.
    pub fn run_batch(&self, e0: ArrayView2<f64>, cfg: &BpuConfig) -> Result<BatchTrajectory> {
        cfg.validate()?;
        if e0.nrows() != self.sizes[0] {
            return Err(Error::Contract(format!(
                "external input has dimension {}, sensory pool has {}",
                e0.nrows(),
                self.sizes[0]
            )));
        }
        let batch = e0.ncols();
        let mut states = Vec::with_capacity(cfg.steps + 1);
        let mut pres = Vec::with_capacity(cfg.steps);
        states.push(BatchState::zeros(self.sizes, batch));
        for t in 0..cfg.steps {
            let input = if t == 0 { Some(e0) } else { None };
            let pre = self.pre_activation(&states[t], input);
            let mut next = pre.clone();
            for p in &mut next.pools {
                p.mapv_inplace(|x| cfg.activation.apply(x));
            }
            if !next.is_finite() {
                return Err(Error::NumericOverflow { step: t + 1 });
            }
            pres.push(pre);
            states.push(next);
        }
        Ok(BatchTrajectory {
            states,
            pre: pres,
            activation: cfg.activation,
        })
    }

    pub fn features(&self, traj: &Trajectory, mode: ReadoutMode) -> Array1<f64> {
        let last = traj.states.last().expect("trajectory is nonempty");
        match mode {
            ReadoutMode::OutputFinal => last.o.clone(),
            ReadoutMode::AllFinal => ndarray::concatenate(Axis(0), &[last.s.view(), last.i.view(), last.o.view()])
                .expect("1-d concatenation"),
            ReadoutMode::OutputTrajectory => {
                let views: Vec<_> = traj.states[1..].iter().map(|s| s.o.view()).collect();
                ndarray::concatenate(Axis(0), &views).expect("1-d concatenation")
            }
        }
    }

    /// Feature matrix of shape `(feature_dim, batch)`.
    pub fn features_batch(&self, traj: &BatchTrajectory, mode: ReadoutMode) -> Array2<f64> {
        let last = traj.states.last().expect("trajectory is nonempty");
        match mode {
            ReadoutMode::OutputFinal => last.pools[2].clone(),
            ReadoutMode::AllFinal => {
                let views: Vec<_> = last.pools.iter().map(|p| p.view()).collect();
                ndarray::concatenate(Axis(0), &views).expect("matching batch width")
            }
            ReadoutMode::OutputTrajectory => {
                let views: Vec<_> = traj.states[1..].iter().map(|s| s.pools[2].view()).collect();
                ndarray::concatenate(Axis(0), &views).expect("matching batch width")
            }
        }
    }

    /// Gradient of `<grad_features, features(traj)>` with respect to `E0`.
    pub fn backward(&self, traj: &Trajectory, grad_features: ArrayView1<f64>, mode: ReadoutMode) -> Result<Array1<f64>> {
        if traj.pre.len() != traj.steps() || traj.steps() == 0 {
            return Err(Error::Contract("trajectory lacks stored pre-activations".into()));
        }
        let batch = BatchTrajectory {
            states: traj.states.iter().map(BpuState::to_batch).collect(),
            pre: traj.pre.iter().map(BpuState::to_batch).collect(),
            activation: traj.activation,
        };
        let g = self.backward_batch(&batch, grad_features.insert_axis(Axis(1)), mode)?;
        Ok(g.column(0).to_owned())
    }

    /// Batched backward; `grad_features` has shape `(feature_dim, batch)` and
    /// the result has shape `(|sensory|, batch)`.
    pub fn backward_batch(
        &self,
        traj: &BatchTrajectory,
        grad_features: ArrayView2<f64>,
        mode: ReadoutMode,
    ) -> Result<Array2<f64>> {
        let steps = traj.steps();
        if traj.pre.len() != steps || steps == 0 {
            return Err(Error::Contract("trajectory lacks stored pre-activations".into()));
        }
        let batch = traj.batch();
        let expected = match mode {
            ReadoutMode::OutputFinal => self.sizes[2],
            ReadoutMode::AllFinal => self.sizes.iter().sum(),
            ReadoutMode::OutputTrajectory => steps * self.sizes[2],
        };
        if grad_features.dim() != (expected, batch) {
            return Err(Error::Contract(format!(
                "feature gradient has shape {:?}, expected ({expected}, {batch})",
                grad_features.dim()
            )));
        }

        // Gradient with respect to the state at time T.
        let mut grad = BatchState::zeros(self.sizes, batch);
        match mode {
            ReadoutMode::OutputFinal => grad.pools[2].assign(&grad_features),
            ReadoutMode::AllFinal => {
                let mut offset = 0;
                for k in 0..3 {
                    let n = self.sizes[k];
                    grad.pools[k].assign(&grad_features.slice(s![offset..offset + n, ..]));
                    offset += n;
                }
            }
            ReadoutMode::OutputTrajectory => {
                let n = self.sizes[2];
                grad.pools[2].assign(&grad_features.slice(s![(steps - 1) * n..steps * n, ..]));
            }
        }

        for t in (1..=steps).rev() {
            // dz_t = da_t * f'(z_t)
            let pre = &traj.pre[t - 1];
            let post = &traj.states[t];
            for k in 0..3 {
                Zip::from(&mut grad.pools[k])
                    .and(&pre.pools[k])
                    .and(&post.pools[k])
                    .for_each(|g, &z, &a| *g *= traj.activation.derivative(z, a));
            }
            if t == 1 {
                // E0 enters the sensory pre-activation additively.
                return Ok(std::mem::take(&mut grad.pools[0]));
            }
            let mut prev = BatchState::zeros(self.sizes, batch);
            for from in 0..3 {
                for to in 0..3 {
                    let bt = &self.transposed[from * 3 + to];
                    if !bt.is_empty() {
                        bt.mul_batch_acc(grad.pools[to].view(), prev.pools[from].view_mut());
                    }
                }
            }
            if mode == ReadoutMode::OutputTrajectory {
                let n = self.sizes[2];
                prev.pools[2] += &grad_features.slice(s![(t - 2) * n..(t - 1) * n, ..]);
            }
            grad = prev;
        }
        unreachable!("loop returns at t = 1")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectome::{Edge, NeuronRecord};
    use crate::surrogate::{generate, SurrogateSpec};
    use ndarray::array;

    fn chain() -> Reservoir {
        let neurons = vec![
            NeuronRecord { id: 1, pool: Pool::Sensory, modality: None },
            NeuronRecord { id: 2, pool: Pool::Internal, modality: None },
            NeuronRecord { id: 3, pool: Pool::Output, modality: None },
        ];
        let edges = vec![
            Edge { source: 0, target: 1, weight: 1.0 },
            Edge { source: 1, target: 2, weight: 1.0 },
        ];
        Reservoir::new(&SignedConnectome::new(neurons, edges).unwrap())
    }

    #[test]
    fn zero_state_zero_input_is_fixed() {
        let r = chain();
        let s = r.step(&BpuState::zeros(r.sizes()), array![0.0].view(), Activation::Relu).unwrap();
        assert_eq!(s, BpuState::zeros(r.sizes()));
    }

    #[test]
    fn chain_reaches_output_after_three_steps() {
        let r = chain();
        let cfg = BpuConfig { steps: 3, ..Default::default() };
        let traj = r.run(array![1.0].view(), &cfg).unwrap();
        assert_eq!(traj.states.len(), 4);
        assert_eq!(traj.states[2].o[0], 0.0);
        assert_eq!(traj.states[3].o[0], 1.0);
        assert_eq!(r.features(&traj, ReadoutMode::OutputFinal), array![1.0]);
        assert_eq!(r.features(&traj, ReadoutMode::OutputTrajectory), array![0.0, 0.0, 1.0]);
        assert_eq!(r.features(&traj, ReadoutMode::AllFinal).len(), 3);
    }

    #[test]
    fn zero_weights_pass_input_through_once() {
        let r = Reservoir::from_blocks(
            [3, 2, 2],
            (0..9)
                .map(|k| {
                    let sizes = [3, 2, 2];
                    CsrMatrix::zeros(sizes[k % 3], sizes[k / 3])
                })
                .collect(),
        );
        let s = r.step(&BpuState::zeros([3, 2, 2]), array![0.0, 1.0, 0.0].view(), Activation::Relu).unwrap();
        assert_eq!(s.s, array![0.0, 1.0, 0.0]);
        assert_eq!(s.i, array![0.0, 0.0]);
        // T = 1 gradient is the ReLU mask of E0.
        let cfg = BpuConfig { steps: 1, readout_mode: ReadoutMode::AllFinal, ..Default::default() };
        let traj = r.run(array![2.0, -1.0, 0.5].view(), &cfg).unwrap();
        let g = r.backward(&traj, Array1::ones(7).view(), ReadoutMode::AllFinal).unwrap();
        assert_eq!(g, array![1.0, 0.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let r = chain();
        let err = r.step(&BpuState::zeros(r.sizes()), array![1.0, 2.0].view(), Activation::Relu);
        assert!(matches!(err, Err(Error::Contract(_))));
        let traj = Trajectory::from_states(vec![BpuState::zeros(r.sizes()); 2], Activation::Relu);
        assert!(matches!(
            r.backward(&traj, array![1.0].view(), ReadoutMode::OutputFinal),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn overflow_names_the_step() {
        let neurons = vec![
            NeuronRecord { id: 1, pool: Pool::Sensory, modality: None },
            NeuronRecord { id: 2, pool: Pool::Output, modality: None },
        ];
        let edges = vec![
            Edge { source: 0, target: 0, weight: 1e300 },
            Edge { source: 0, target: 1, weight: 1.0 },
        ];
        let r = Reservoir::new(&SignedConnectome::new(neurons, edges).unwrap());
        let cfg = BpuConfig { steps: 4, ..Default::default() };
        match r.run(array![1e10].view(), &cfg) {
            Err(Error::NumericOverflow { step }) => assert_eq!(step, 2),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn batch_matches_single_sample_runs() {
        let c = generate(&SurrogateSpec::small([6, 20, 4], 150, 3)).unwrap();
        let (c, _) = crate::connectome::normalize(&c, crate::connectome::NormScheme::AbsMax).unwrap();
        let r = Reservoir::new(&c);
        let cfg = BpuConfig { steps: 4, readout_mode: ReadoutMode::OutputTrajectory, ..Default::default() };
        let e = Array2::from_shape_fn((6, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let bt = r.run_batch(e.view(), &cfg).unwrap();
        let fb = r.features_batch(&bt, cfg.readout_mode);
        let gb = r.backward_batch(&bt, fb.view(), cfg.readout_mode).unwrap();
        for j in 0..3 {
            let t = r.run(e.column(j), &cfg).unwrap();
            let f = r.features(&t, cfg.readout_mode);
            assert_eq!(f, fb.column(j));
            assert_eq!(r.backward(&t, f.view(), cfg.readout_mode).unwrap(), gb.column(j));
        }
    }
}
