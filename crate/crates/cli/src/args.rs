use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use bpu_chess::data::Perspective;
use bpu_chess::embed::EncoderKind;
use bpu_core::connectome::{NormScheme, Sign};
use bpu_core::readout::{OptimizerKind, TrainConfig};
use bpu_core::reservoir::{Activation, BpuConfig, ReadoutMode};
use bpu_core::vision::Source;

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConnectomeArgs {
    /// Connectome directory with nodes.csv, edges.csv and polarity.csv
    /// (default: <data-root>/connectome)
    #[arg(long, visible_alias = "in", value_name = "DIR", conflicts_with = "surrogate")]
    pub connectome: Option<PathBuf>,
    /// Use the seeded synthetic stand-in instead of a real connectome
    #[arg(long, value_name = "SEED")]
    pub surrogate: Option<u64>,
    /// Sign of presynaptic neurons missing from polarity.csv (+1 or -1)
    #[arg(long, default_value = "+1", allow_hyphen_values = true)]
    pub default_sign: Sign,
    /// `id,modality` file overriding the sensory modality tags
    #[arg(long, value_name = "FILE")]
    pub modality_map: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReservoirArgs {
    /// Unroll steps T
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value = "relu")]
    pub activation: Activation,
    /// output-final, all-final or output-trajectory
    #[arg(long, default_value = "output-final")]
    pub readout: ReadoutMode,
    /// Weight normalization: none, abs-max or spectral(RHO)
    #[arg(long, default_value = "abs-max")]
    pub norm: NormScheme,
}

impl ReservoirArgs {
    pub fn bpu(&self) -> BpuConfig {
        BpuConfig { steps: self.steps, activation: self.activation, readout_mode: self.readout }
    }
}

/// Optimizer settings. Unset values take the subcommand's defaults.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    /// sgd, sgd-momentum or adam
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
}

impl TrainArgs {
    pub fn resolve(&self, defaults: TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr.unwrap_or(defaults.learning_rate),
            epochs: self.epochs.unwrap_or(defaults.epochs),
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            weight_decay: self.weight_decay,
            ..defaults
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ImageArgs {
    /// mnist or cifar10
    #[arg(long, default_value = "mnist")]
    pub dataset: Source,
    /// Directory with the dataset files (default: <data-root>/<dataset>)
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Stratified training subset size
    #[arg(long, default_value_t = 10_000)]
    pub subset: usize,
    /// Stratified test subset size (default: the whole test split)
    #[arg(long)]
    pub test_subset: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InfoArgs {
    pub dir: PathBuf,
    #[arg(long, default_value = "+1", allow_hyphen_values = true)]
    pub default_sign: Sign,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExpandArgs {
    /// Expansion factor F in 1..=5
    #[arg(long)]
    pub factor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub connectome: ConnectomeArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainVisionArgs {
    #[command(flatten)]
    pub images: ImageArgs,
    /// Expansion factors, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub factor: Vec<usize>,
    /// Seeds, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seed: Vec<u64>,
    /// Also train the parameter-matched MLP
    #[arg(long)]
    pub baseline: bool,
    /// Write the unroll of the first N test images of every BPU run
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub dump_trajectory: usize,
    #[command(flatten)]
    pub reservoir: ReservoirArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub connectome: ConnectomeArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    pub images: ImageArgs,
    /// Modalities fed with input, comma separated; repeat for more arms
    #[arg(long, required = true)]
    pub modality: Vec<String>,
    /// Remove the other sensory neurons instead of only withholding input
    #[arg(long)]
    pub delete_excluded: bool,
    /// Seeds, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seed: Vec<u64>,
    #[command(flatten)]
    pub reservoir: ReservoirArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub connectome: ConnectomeArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainChessArgs {
    /// `fen,win_prob` CSV (default: <data-root>/chess/train.csv)
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Use at most N labeled rows
    #[arg(long, value_name = "N")]
    pub games: Option<usize>,
    /// graph or tensor
    #[arg(long, default_value = "graph")]
    pub encoder: EncoderKind,
    /// Whose win probability the label column holds: side-to-move or white
    #[arg(long, default_value = "side-to-move")]
    pub perspective: Perspective,
    /// Held-out fraction for validation
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub reservoir: ReservoirArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    #[command(flatten)]
    pub connectome: ConnectomeArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolvePuzzlesArgs {
    /// Puzzle CSV with PuzzleId, FEN, Moves and Rating columns
    /// (default: <data-root>/chess/puzzles.csv)
    #[arg(long, value_name = "FILE")]
    pub puzzles: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub depth: u32,
    /// Plain minimax without alpha-beta cutoffs
    #[arg(long)]
    pub no_pruning: bool,
    /// Directory written by train-chess; material evaluation when absent
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
    /// Solve only the first N puzzles
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerftArgs {
    /// FEN string or `startpos`
    #[arg(long, default_value = "startpos")]
    pub fen: String,
    #[arg(long)]
    pub depth: u32,
    /// Print the count below each root move
    #[arg(long)]
    pub divide: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RerunArgs {
    /// manifest.json of the run to repeat
    pub manifest: PathBuf,
}
