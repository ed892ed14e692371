//! `bpu`: ingestion, expansion, training, ablation and chess evaluation.

mod args;
mod commands;
mod config;
mod error;
mod plot;
mod run;

use std::path::PathBuf;

use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;

use args::*;
use error::{CliError, Result};
use run::RunContext;

#[derive(Debug, Parser)]
#[command(name = "bpu", version, about = "Connectome reservoir experiments", propagate_version = true)]
struct Cli {
    /// Worker threads (default: available cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `key = value` file supplying flags not given on the command line
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root directory for datasets
    #[arg(long, global = true, env = "BPU_DATA_DIR", default_value = "data", value_name = "DIR")]
    data_root: PathBuf,
    /// Output directory (default: runs/<subcommand>)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// More log output; repeat for debug
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print pool sizes, edge count and sign ratios of a connectome directory
    Info(InfoArgs),
    /// Sample an expanded connectome from the fitted block model
    Expand(ExpandArgs),
    /// Train BPU projections and optionally the matched MLP on images
    TrainVision(TrainVisionArgs),
    /// Feed input only to selected sensory modalities
    Ablate(AblateArgs),
    /// Train the chess value model on labeled positions
    TrainChess(TrainChessArgs),
    /// Solve puzzles with minimax over a value function
    SolvePuzzles(SolvePuzzlesArgs),
    /// Count leaves of the legal move tree
    Perft(PerftArgs),
    /// Write the synthetic stand-in connectome
    SynthConnectome(SynthArgs),
    /// Repeat a run from its manifest and compare the result CSVs
    Rerun(RerunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Info(_) => "info",
            Command::Expand(_) => "expand",
            Command::TrainVision(_) => "train-vision",
            Command::Ablate(_) => "ablate",
            Command::TrainChess(_) => "train-chess",
            Command::SolvePuzzles(_) => "solve-puzzles",
            Command::Perft(_) => "perft",
            Command::SynthConnectome(_) => "synth-connectome",
            Command::Rerun(_) => "rerun",
        }
    }
}

/// What an experiment subcommand sees besides its own arguments.
pub struct Env {
    pub data_root: PathBuf,
    pub out: Option<PathBuf>,
    /// Arguments to record in the manifest.
    pub argv: Vec<String>,
}

impl Env {
    /// Runs `body` against a staged output directory and commits it, or
    /// leaves a failure marker.
    pub fn experiment(
        &self,
        name: &str,
        config: &impl Serialize,
        body: impl FnOnce(&mut RunContext) -> Result<()>,
    ) -> Result<()> {
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
        let config = serde_json::to_value(config).expect("arguments serialize");
        let mut ctx = RunContext::begin(name, self.argv.clone(), config, &out)?;
        match body(&mut ctx) {
            Ok(()) => {
                let m = ctx.commit()?;
                log::info!("{name}: {} outputs in {} ({:.1}s)", m.outputs.len(), out.display(), m.runtime_secs);
                Ok(())
            }
            Err(e) => {
                ctx.fail(&e);
                Err(e)
            }
        }
    }
}

enum Failure {
    Clap(clap::Error),
    Run(CliError),
}

impl From<CliError> for Failure {
    fn from(e: CliError) -> Self {
        Failure::Run(e)
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn subcommand_of(argv: &[String]) -> Option<String> {
    let cmd = Cli::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
    argv.iter().skip(1).find(|a| names.contains(&a.as_str())).cloned()
}

fn dispatch(argv: Vec<String>) -> std::result::Result<(), Failure> {
    let sub = subcommand_of(&argv);
    let argv = match config::flag_value(&argv, "--config") {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let settings = config::parse_config(&text, &path)?;
            config::merge(&argv, &settings, sub.as_deref())
        }
        None => argv,
    };
    let cli = Cli::try_parse_from(&argv).map_err(Failure::Clap)?;
    init_logging(cli.verbose);
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::debug!("thread pool already configured: {e}");
        }
    }

    let mut recorded = config::strip_flag(&argv, "--config");
    recorded = config::strip_flag(&recorded, "--out");
    recorded = config::strip_flag(&recorded, "--data-root");
    recorded.push(format!("--data-root={}", cli.data_root.display()));
    let env = Env {
        data_root: cli.data_root.clone(),
        out: cli.out.clone(),
        argv: recorded,
    };
    log::debug!("running {}", cli.command.name());
    match cli.command {
        Command::Info(a) => commands::graph::info(&a),
        Command::Expand(a) => commands::graph::expand(&env, &a),
        Command::SynthConnectome(a) => commands::graph::synth(&env, &a),
        Command::TrainVision(a) => commands::vision::train_vision(&env, &a),
        Command::Ablate(a) => commands::vision::ablate(&env, &a),
        Command::TrainChess(a) => commands::chess::train_chess(&env, &a),
        Command::SolvePuzzles(a) => commands::chess::solve_puzzles(&env, &a),
        Command::Perft(a) => commands::chess::perft(&a),
        Command::Rerun(a) => rerun(&a, cli.out),
    }?;
    Ok(())
}

/// Replays the manifest's argv into a fresh directory and compares CSVs.
fn rerun(a: &RerunArgs, out: Option<PathBuf>) -> Result<()> {
    let m = run::load_manifest(&a.manifest)?;
    let changed = run::changed_inputs(&m)?;
    if !changed.is_empty() {
        return Err(CliError::Data(format!("inputs changed since the recorded run: {}", changed.join(", "))));
    }
    let original = a.manifest.parent().map(PathBuf::from).unwrap_or_default();
    let out = out.unwrap_or_else(|| {
        let mut name = original.file_name().unwrap_or_default().to_os_string();
        name.push("-rerun");
        original.with_file_name(name)
    });
    let mut argv = m.argv.clone();
    argv.push(format!("--out={}", out.display()));
    match dispatch(argv) {
        Ok(()) => {}
        Err(Failure::Clap(e)) => return Err(CliError::Usage(format!("manifest arguments no longer parse: {e}"))),
        Err(Failure::Run(e)) => return Err(e),
    }
    let differ = run::differing_csvs(&m, &original, &out);
    if !differ.is_empty() {
        return Err(CliError::Mismatch(format!("rerun differs in: {}", differ.join(", "))));
    }
    println!("rerun in {} matches {} result CSVs", out.display(), m.outputs.iter().filter(|o| o.ends_with(".csv")).count());
    Ok(())
}

fn main() {
    let code = match dispatch(std::env::args().collect()) {
        Ok(()) => 0,
        Err(Failure::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
