//! Frozen board embedding, trainable projections around a frozen reservoir,
//! and a sigmoid value head.
//!
//! Boards are embedded from the mover's point of view: when black is to
//! move the board is mirrored first, so the value is always "white to move
//! wins" for the embedder. Embeddings are standardized per feature with
//! statistics fitted on the training positions.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use bpu_core::readout::checkpoint::{self, Tensor};
use bpu_core::readout::{self, BpuModel, Dataset, Labels, Loss, ReadoutInit, TrainConfig, TrainReport, Trainable};
use bpu_core::reservoir::{BpuConfig, Reservoir};

use crate::board::Board;
use crate::data::LabeledPosition;
use crate::embed::{Embedder, EncoderKind, EMBED_DIM};
use crate::error::Result;
use crate::search::Evaluator;
use crate::types::Color;

#[derive(Debug, Clone)]
pub struct ValueModel {
    pub embedder: Embedder,
    pub embed_seed: u64,
    /// Per-feature mean and reciprocal standard deviation of the embeddings.
    pub scaling: Option<(Array1<f64>, Array1<f64>)>,
    pub model: BpuModel,
}

/// The board as seen by the side to move, which always plays white.
pub fn oriented(b: &Board) -> std::borrow::Cow<'_, Board> {
    match b.side_to_move() {
        Color::White => std::borrow::Cow::Borrowed(b),
        Color::Black => std::borrow::Cow::Owned(b.mirrored()),
    }
}

impl ValueModel {
    /// Zero-initialized value readout, so every board starts at exactly 0.5.
    pub fn new(reservoir: Arc<Reservoir>, config: BpuConfig, kind: EncoderKind, seed: u64) -> Result<Self> {
        let embed_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
        let model = BpuModel::new(reservoir, config, EMBED_DIM, 1, None, ReadoutInit::Zero, seed)?;
        Ok(ValueModel {
            embedder: Embedder::new(kind, embed_seed),
            embed_seed,
            scaling: None,
            model,
        })
    }

    pub fn encoder(&self) -> EncoderKind {
        self.embedder.kind()
    }

    /// Unscaled embeddings of the oriented boards, one per row.
    pub fn raw_embeddings(&self, boards: &[Board]) -> Array2<f64> {
        let oriented: Vec<Board> = boards.iter().map(|b| oriented(b).into_owned()).collect();
        self.embedder.embed_all(&oriented)
    }

    /// Fits the standardization on training embeddings. Constant features
    /// are centered but not rescaled.
    pub fn fit_scaling(&mut self, raw: &Array2<f64>) -> Result<()> {
        if raw.nrows() == 0 || raw.ncols() != EMBED_DIM {
            return Err(bpu_core::Error::Validation("scaling needs a nonempty (n, 256) embedding matrix".into()).into());
        }
        let mean = raw.mean_axis(Axis(0)).expect("nonempty");
        let inv = raw.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
        self.scaling = Some((mean, inv));
        Ok(())
    }

    pub fn scaled(&self, mut raw: Array2<f64>) -> Array2<f64> {
        if let Some((mean, inv)) = &self.scaling {
            for mut row in raw.rows_mut() {
                row -= mean;
                row *= inv;
            }
        }
        raw
    }

    /// Side-to-move win probability for each row of scaled `(n, 256)` embeddings.
    pub fn values_from_embeddings(&self, emb: &Array2<f64>) -> Result<Vec<f64>> {
        let mut s = self.model.forward(emb.t())?;
        Loss::Mse.link(&mut s);
        Ok(s.row(0).to_vec())
    }

    pub fn values(&self, boards: &[Board]) -> Result<Vec<f64>> {
        self.values_from_embeddings(&self.scaled(self.raw_embeddings(boards)))
    }

    pub fn try_value(&self, b: &Board) -> Result<f64> {
        let e = self.embedder.embed(&oriented(b)).insert_axis(Axis(0));
        Ok(self.values_from_embeddings(&self.scaled(e))?[0])
    }

    pub fn dataset_from_raw(&self, raw: Array2<f64>, labels: &[f64]) -> Result<Dataset> {
        if raw.nrows() != labels.len() {
            return Err(bpu_core::Error::Validation(format!("{} boards but {} labels", raw.nrows(), labels.len())).into());
        }
        Ok(Dataset::new(self.scaled(raw), Labels::Values(labels.to_vec()))?)
    }

    pub fn dataset(&self, boards: &[Board], labels: &[f64]) -> Result<Dataset> {
        self.dataset_from_raw(self.raw_embeddings(boards), labels)
    }

    /// Trains both projections with a squared-error loss on the sigmoid output.
    pub fn train(&mut self, data: &Dataset, config: &TrainConfig, on_epoch: impl FnMut(usize, &BpuModel, f64)) -> Result<TrainReport> {
        if config.loss != Loss::Mse {
            return Err(bpu_core::Error::Validation("value training uses the mse loss".into()).into());
        }
        Ok(readout::train(&mut self.model, data, config, on_epoch)?)
    }

    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        Ok(readout::evaluate(&self.model, data, Loss::Mse)?)
    }

    pub fn trainable_param_count(&self) -> usize {
        self.model.trainable_param_count()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut t = checkpoint::projection_tensors("input", &self.model.input);
        t.extend(checkpoint::projection_tensors("output", &self.model.output));
        if let Some((mean, inv)) = &self.scaling {
            t.push(Tensor::vector("scaling.mean", mean));
            t.push(Tensor::vector("scaling.inv_std", inv));
        }
        Ok(checkpoint::write(path, &t)?)
    }

    pub fn load_weights(&mut self, path: &Path) -> Result<()> {
        let t: Vec<Tensor> = checkpoint::read(path)?;
        checkpoint::load_projection("input", &t, &mut self.model.input)?;
        checkpoint::load_projection("output", &t, &mut self.model.output)?;
        let find = |name: &str| t.iter().find(|x| x.name == name).map(|x| Array1::from(x.data.clone()));
        self.scaling = match (find("scaling.mean"), find("scaling.inv_std")) {
            (Some(m), Some(s)) if m.len() == EMBED_DIM && s.len() == EMBED_DIM => Some((m, s)),
            (None, None) => None,
            _ => return Err(bpu_core::Error::Format("malformed scaling tensors in value checkpoint".into()).into()),
        };
        Ok(())
    }
}

/// Outcome of [`ValueModel::fit`]. Validation numbers are on held-out positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFit {
    pub train_size: usize,
    pub val_size: usize,
    pub init_val_mse: f64,
    pub val_mse: f64,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Validation MSE after each epoch.
    pub val_curve: Vec<f64>,
    /// Smallest and largest validation prediction after training.
    pub val_range: (f64, f64),
}

impl ValueModel {
    /// Holds out a seeded `val_fraction` of the positions, fits the embedding
    /// scaling on the rest and trains on them.
    pub fn fit(&mut self, positions: &[LabeledPosition], val_fraction: f64, config: &TrainConfig) -> Result<ValueFit> {
        let n_val = (positions.len() as f64 * val_fraction).round() as usize;
        if !(0.0..1.0).contains(&val_fraction) || n_val == 0 || n_val >= positions.len() {
            return Err(bpu_core::Error::Validation(format!(
                "cannot hold out {val_fraction} of {} positions",
                positions.len()
            ))
            .into());
        }
        let mut order: Vec<usize> = (0..positions.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let (val_idx, train_idx) = order.split_at(n_val);
        let boards = |idx: &[usize]| idx.iter().map(|&i| positions[i].board.clone()).collect::<Vec<_>>();
        let labels = |idx: &[usize]| idx.iter().map(|&i| positions[i].value).collect::<Vec<_>>();

        let raw_train = self.raw_embeddings(&boards(train_idx));
        self.fit_scaling(&raw_train)?;
        let train_data = self.dataset_from_raw(raw_train, &labels(train_idx))?;
        let val_data = self.dataset(&boards(val_idx), &labels(val_idx))?;

        let init_val_mse = self.mse(&val_data)?;
        let mut val_curve = Vec::with_capacity(config.epochs);
        let mut val_err = None;
        let report = self.train(&train_data, config, |_, m, _| match readout::evaluate(m, &val_data, Loss::Mse) {
            Ok(v) => val_curve.push(v),
            Err(e) => val_err = Some(e),
        })?;
        if let Some(e) = val_err {
            return Err(e.into());
        }
        let preds = self.values_from_embeddings(&val_data.inputs)?;
        let val_range = preds
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(ValueFit {
            train_size: train_data.len(),
            val_size: val_data.len(),
            init_val_mse,
            val_mse: *val_curve.last().expect("at least one epoch"),
            loss_curve: report.loss_curve,
            val_curve,
            val_range,
        })
    }
}

impl Evaluator for ValueModel {
    fn value(&self, b: &Board) -> f64 {
        match self.try_value(b) {
            Ok(v) => v,
            Err(e) => panic!("value model failed on {}: {e}", crate::fen::to_fen(b)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bpu_core::surrogate::{generate, SurrogateSpec};

    fn small_model(kind: EncoderKind) -> ValueModel {
        let c = generate(&SurrogateSpec::small([20, 40, 10], 400, 1)).unwrap();
        let (c, _) = bpu_core::connectome::normalize(&c, bpu_core::connectome::NormScheme::AbsMax).unwrap();
        ValueModel::new(Arc::new(Reservoir::new(&c)), BpuConfig::default(), kind, 3).unwrap()
    }

    #[test]
    fn fit_learns_material_labels() {
        let mut m = small_model(EncoderKind::Graph);
        let fens = [
            "4k3/8/8/8/8/8/8/R3K3 w Q - 0 1",
            "4k3/8/8/8/8/8/8/R3K3 b Q - 0 1",
            "r3k3/8/8/8/8/8/8/4K3 w q - 0 1",
            "r3k3/8/8/8/8/8/8/4K3 b q - 0 1",
        ];
        let positions: Vec<LabeledPosition> = (0..40)
            .map(|i| {
                let board = crate::fen::parse_fen(fens[i % 4]).unwrap();
                let value = if matches!(i % 4, 0 | 3) { 0.9 } else { 0.1 };
                LabeledPosition { board, value }
            })
            .collect();
        let cfg = TrainConfig { learning_rate: 1e-2, epochs: 30, batch_size: 8, loss: Loss::Mse, ..TrainConfig::default() };
        let fit = m.fit(&positions, 0.25, &cfg).unwrap();
        assert_eq!((fit.train_size, fit.val_size), (30, 10));
        assert!((fit.init_val_mse - 0.16).abs() < 1e-12);
        assert!(fit.val_mse < 0.5 * fit.init_val_mse, "{fit:?}");
        assert!(fit.val_range.0 > 0.0 && fit.val_range.1 < 1.0);
        assert!(m.fit(&positions, 0.0, &cfg).is_err());
    }

    #[test]
    fn untrained_value_is_half() {
        for kind in [EncoderKind::Graph, EncoderKind::Tensor] {
            let m = small_model(kind);
            assert_eq!(m.value(&Board::startpos()), 0.5);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = small_model(EncoderKind::Tensor);
        let raw = m.raw_embeddings(&[Board::startpos(), crate::fen::parse_fen("4k3/8/8/8/8/8/8/R3K3 b Q - 0 1").unwrap()]);
        m.fit_scaling(&raw).unwrap();
        let mut other = small_model(EncoderKind::Tensor);
        other.model.input.weights.fill(0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("value.bpu");
        m.save(&path).unwrap();
        other.load_weights(&path).unwrap();
        assert_eq!(other.model.input.weights, m.model.input.weights);
        assert_eq!(other.scaling, m.scaling);
    }

    #[test]
    fn mirrored_positions_share_an_embedding() {
        let m = small_model(EncoderKind::Graph);
        let b = crate::fen::parse_fen("r1bqkbnr/pppp1ppp/2n5/4p3/4P3/5N2/PPPP1PPP/RNBQKB1R w KQkq - 2 3").unwrap();
        let raw = m.raw_embeddings(&[b.clone(), b.mirrored()]);
        assert_eq!(raw.row(0), raw.row(1));
    }
}
