use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use bpu_chess::data::{load_labels, load_puzzles, Perspective};
use bpu_chess::embed::EncoderKind;
use bpu_chess::movegen::divide;
use bpu_chess::puzzle::puzzle_accuracy;
use bpu_chess::{parse_fen, perft as count_leaves, ChessError, MaterialEvaluator, ValueModel, START_FEN};
use bpu_core::connectome::{normalize, NormScheme, PolarityOptions, SignedConnectome, EDGES_FILE, NODES_FILE, POLARITY_FILE};
use bpu_core::readout::{Loss, TrainConfig};
use bpu_core::reservoir::{BpuConfig, Reservoir};
use bpu_core::surrogate::{self, SurrogateSpec};

use super::graph::{load_connectome, ConnectomeSource};
use crate::args::{PerftArgs, SolvePuzzlesArgs, TrainChessArgs};
use crate::error::{CliError, Result};
use crate::run::RunContext;
use crate::Env;

pub const MODEL_FILE: &str = "value.bpu";
pub const CARD_FILE: &str = "value.json";

/// Everything needed to rebuild a trained value model besides its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub encoder: EncoderKind,
    pub perspective: Perspective,
    pub seed: u64,
    pub bpu: BpuConfig,
    pub norm: NormScheme,
    pub connectome: ConnectomeSource,
    pub default_sign: bpu_core::connectome::Sign,
    /// Checksum of the normalized connectome the model was trained on.
    pub connectome_checksum: String,
    pub trainable_params: usize,
    pub positions: usize,
}

fn existing(path: Option<&PathBuf>, fallback: PathBuf, what: &str, flag: &str) -> Result<PathBuf> {
    let path = path.cloned().unwrap_or(fallback);
    if !path.exists() {
        return Err(CliError::Data(format!("{what} {} not found; pass {flag} FILE", path.display())));
    }
    Ok(path)
}

#[derive(Serialize)]
struct Snapshot<'a> {
    args: &'a TrainChessArgs,
    resolved: &'a TrainConfig,
}

pub fn train_chess(env: &Env, a: &TrainChessArgs) -> Result<()> {
    let defaults = TrainConfig { epochs: 10, learning_rate: 3e-3, loss: Loss::Mse, seed: a.seed, ..TrainConfig::default() };
    let tc = a.train.resolve(defaults);
    env.experiment("train-chess", &Snapshot { args: a, resolved: &tc }, |ctx| {
        ctx.seeds(&[a.seed]);
        let path = existing(a.data.as_ref(), env.data_root.join("chess/train.csv"), "label file", "--data")?;
        ctx.input(&path)?;
        let mut positions = load_labels(&path, a.perspective)?;
        if let Some(n) = a.games {
            positions.truncate(n);
        }
        let (c, source) = load_connectome(&a.connectome, &env.data_root, Some(ctx))?;
        let (graph, _) = normalize(&c, a.reservoir.norm)?;
        let mut vm = ValueModel::new(Arc::new(Reservoir::new(&graph)), a.reservoir.bpu(), a.encoder, a.seed)?;
        let t0 = Instant::now();
        let fit = vm.fit(&positions, a.val_fraction, &tc)?;
        ctx.time("fit", t0.elapsed().as_secs_f64());

        vm.save(&ctx.output(MODEL_FILE)?)?;
        let card = ModelCard {
            encoder: a.encoder,
            perspective: a.perspective,
            seed: a.seed,
            bpu: a.reservoir.bpu(),
            norm: a.reservoir.norm,
            connectome: source,
            default_sign: a.connectome.default_sign,
            connectome_checksum: graph.checksum(),
            trainable_params: vm.trainable_param_count(),
            positions: positions.len(),
        };
        ctx.write(CARD_FILE, serde_json::to_string_pretty(&card).expect("card serializes") + "\n")?;

        let ratio = fit.val_mse / fit.init_val_mse;
        let mut m = String::from("metric,value\n");
        for (k, v) in [
            ("train_positions", fit.train_size as f64),
            ("val_positions", fit.val_size as f64),
            ("init_val_mse", fit.init_val_mse),
            ("val_mse", fit.val_mse),
            ("val_mse_ratio", ratio),
            ("val_min", fit.val_range.0),
            ("val_max", fit.val_range.1),
            ("trainable_params", card.trainable_params as f64),
        ] {
            let _ = writeln!(m, "{k},{v}");
        }
        ctx.write("metrics.csv", m)?;
        let mut curve = String::from("epoch,train_loss,val_mse\n");
        for (i, (l, v)) in fit.loss_curve.iter().zip(&fit.val_curve).enumerate() {
            let _ = writeln!(curve, "{},{l},{v}", i + 1);
        }
        ctx.write("loss_curve.csv", curve)?;
        println!(
            "{} encoder: val mse {:.5} -> {:.5} ({:.1}% of initial), {} trainable params",
            a.encoder,
            fit.init_val_mse,
            fit.val_mse,
            100.0 * ratio,
            card.trainable_params
        );
        Ok(())
    })
}

/// Rebuilds a model saved by `train-chess` and checks it sees the same connectome.
pub fn load_value_model(dir: &Path, ctx: &mut RunContext) -> Result<ValueModel> {
    let card_path = dir.join(CARD_FILE);
    let weights = dir.join(MODEL_FILE);
    let text = std::fs::read_to_string(&card_path).map_err(|e| CliError::io(&card_path, e))?;
    let card: ModelCard =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", card_path.display())))?;
    ctx.input(&card_path)?;
    ctx.input(&weights)?;
    let c = match &card.connectome {
        ConnectomeSource::Surrogate { seed } => surrogate::generate(&SurrogateSpec::larva(*seed))?,
        ConnectomeSource::Dir { path } => {
            for name in [NODES_FILE, EDGES_FILE, POLARITY_FILE] {
                if path.join(name).exists() {
                    ctx.input(&path.join(name))?;
                }
            }
            SignedConnectome::load_dir(path, PolarityOptions { default_sign: card.default_sign })?
        }
    };
    let (graph, _) = normalize(&c, card.norm)?;
    if graph.checksum() != card.connectome_checksum {
        return Err(CliError::Data(format!(
            "connectome differs from the one {} was trained on",
            dir.display()
        )));
    }
    let mut vm = ValueModel::new(Arc::new(Reservoir::new(&graph)), card.bpu, card.encoder, card.seed)?;
    vm.load_weights(&weights)?;
    Ok(vm)
}

pub fn solve_puzzles(env: &Env, a: &SolvePuzzlesArgs) -> Result<()> {
    env.experiment("solve-puzzles", a, |ctx| {
        let path = existing(a.puzzles.as_ref(), env.data_root.join("chess/puzzles.csv"), "puzzle file", "--puzzles")?;
        ctx.input(&path)?;
        let mut puzzles = load_puzzles(&path)?;
        if let Some(n) = a.limit {
            puzzles.truncate(n);
        }
        let pruning = !a.no_pruning;
        let (evaluator, report) = match &a.model {
            Some(dir) => {
                let vm = load_value_model(dir, ctx)?;
                (format!("value-{}", vm.encoder()), puzzle_accuracy(&puzzles, &vm, a.depth, pruning)?)
            }
            None => ("material".to_string(), puzzle_accuracy(&puzzles, &MaterialEvaluator, a.depth, pruning)?),
        };
        ctx.write("elo_bins.csv", report.bins_csv())?;
        ctx.write("puzzles.csv", report.puzzles_csv())?;
        ctx.write(
            "summary.csv",
            format!(
                "evaluator,depth,pruning,total,solved,skipped,accuracy\n{evaluator},{},{pruning},{},{},{},{}\n",
                a.depth, report.total, report.solved, report.skipped, report.accuracy
            ),
        )?;
        println!(
            "accuracy: {:.2}% ({}/{} solved, {} skipped)",
            report.accuracy,
            report.solved,
            report.total - report.skipped,
            report.skipped
        );
        Ok(())
    })
}

pub fn perft(a: &PerftArgs) -> Result<()> {
    let fen = if a.fen == "startpos" { START_FEN } else { a.fen.as_str() };
    let mut b = parse_fen(fen).map_err(|source| ChessError::Fen { fen: fen.to_string(), source })?;
    if a.divide {
        let mut total = 0;
        for (mv, n) in divide(&mut b, a.depth) {
            println!("{mv}: {n}");
            total += n;
        }
        println!();
        println!("{total}");
    } else {
        println!("{}", count_leaves(&mut b, a.depth));
    }
    Ok(())
}
