use std::fmt::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use bpu_core::connectome::normalize;
use bpu_core::dcsbm;
use bpu_core::readout::{TrainConfig, TrainReport};
use bpu_core::vision::{
    dataset_files, load_dir, modality_targets, prepare, run_ablation, run_baseline, summarize, train_bpu, AblationSpec,
    ImageDataset, ResultRow, VisionConfig,
};
use bpu_core::Error;

use super::graph::load_connectome;
use crate::args::{AblateArgs, ImageArgs, ReservoirArgs, TrainArgs, TrainVisionArgs};
use crate::error::{CliError, Result};
use crate::plot::{line_chart, Series};
use crate::run::RunContext;
use crate::Env;

pub const RESULTS_HEADER: &str = "dataset,model,factor,seed,subset,accuracy,params\n";
pub const ABLATION_HEADER: &str = "dataset,modalities,neurons,steps,deleted,seed,subset,accuracy,params\n";

#[derive(Serialize)]
struct Snapshot<'a, A> {
    args: &'a A,
    resolved: &'a VisionConfig,
}

fn vision_config(images: &ImageArgs, reservoir: &ReservoirArgs, train: &TrainArgs) -> VisionConfig {
    let defaults = TrainConfig { epochs: 20, learning_rate: 1e-2, ..TrainConfig::default() };
    VisionConfig {
        bpu: reservoir.bpu(),
        train: train.resolve(defaults),
        norm: reservoir.norm,
        subset: images.subset,
        test_subset: images.test_subset,
    }
}

fn load_images(a: &ImageArgs, data_root: &Path, ctx: &mut RunContext) -> Result<(ImageDataset, ImageDataset)> {
    let dir = a.data.clone().unwrap_or_else(|| data_root.join(a.dataset.to_string()));
    let files = dataset_files(a.dataset, &dir);
    if let Some(missing) = files.iter().find(|p| !p.exists()) {
        return Err(CliError::Data(format!(
            "{} not found; place the {} files in {} or pass --data DIR",
            missing.display(),
            a.dataset,
            dir.display()
        )));
    }
    for f in &files {
        ctx.input(f)?;
    }
    Ok(load_dir(a.dataset, &dir)?)
}

fn push_curve(curves: &mut String, label: &str, report: &TrainReport) {
    for (epoch, loss) in report.loss_curve.iter().enumerate() {
        let _ = writeln!(curves, "{label},{},{loss}", epoch + 1);
    }
}

fn check_frozen(before: &str, after: &str) -> Result<()> {
    if before != after {
        return Err(Error::Contract("frozen weights changed during training".into()).into());
    }
    Ok(())
}

pub fn train_vision(env: &Env, a: &TrainVisionArgs) -> Result<()> {
    let cfg = vision_config(&a.images, &a.reservoir, &a.train);
    env.experiment("train-vision", &Snapshot { args: a, resolved: &cfg }, |ctx| {
        ctx.seeds(&a.seed);
        let (base, _) = load_connectome(&a.connectome, &env.data_root, Some(ctx))?;
        let (train_set, test_set) = load_images(&a.images, &env.data_root, ctx)?;
        let mut rows = Vec::new();
        let mut curves = String::from("model,factor,seed,epoch,loss\n");
        for &factor in &a.factor {
            for &seed in &a.seed {
                let t0 = Instant::now();
                let expanded = dcsbm::expand(&base, factor, seed)?.graph;
                let (graph, _) = normalize(&expanded, cfg.norm)?;
                let (train_data, test_data) = prepare(&train_set, &test_set, &cfg, seed)?;
                let (out, model) = train_bpu(&graph, None, &train_data, &test_data, &cfg, seed)?;
                check_frozen(&out.reservoir_checksum_before, &out.reservoir_checksum_after)?;
                ctx.time(format!("bpu F={factor} seed={seed}"), t0.elapsed().as_secs_f64());
                println!("{} bpu F={factor} seed={seed}: accuracy {:.4} ({} params)", a.images.dataset, out.accuracy, out.params);
                push_curve(&mut curves, &format!("bpu,{factor},{seed}"), &out.report);
                for i in 0..a.dump_trajectory.min(test_data.len()) {
                    let traj = model.trajectory(test_data.inputs.row(i))?;
                    traj.write_csv(&ctx.output(&format!("trajectories/bpu-F{factor}-s{seed}-{i}.csv"))?)?;
                }
                rows.push(ResultRow {
                    dataset: a.images.dataset,
                    model: "bpu".into(),
                    factor,
                    seed,
                    subset: train_data.len(),
                    accuracy: out.accuracy,
                    params: out.params,
                });
                if a.baseline {
                    let t0 = Instant::now();
                    let mlp = run_baseline(out.params, &train_data, &test_data, &cfg, seed)?;
                    check_frozen(&mlp.reservoir_checksum_before, &mlp.reservoir_checksum_after)?;
                    ctx.time(format!("mlp F={factor} seed={seed}"), t0.elapsed().as_secs_f64());
                    println!("{} mlp F={factor} seed={seed}: accuracy {:.4} ({} params)", a.images.dataset, mlp.accuracy, mlp.params);
                    push_curve(&mut curves, &format!("mlp,{factor},{seed}"), &mlp.report);
                    rows.push(ResultRow {
                        dataset: a.images.dataset,
                        model: "mlp".into(),
                        factor,
                        seed,
                        subset: train_data.len(),
                        accuracy: mlp.accuracy,
                        params: mlp.params,
                    });
                }
            }
        }

        let mut body = String::new();
        for r in &rows {
            let _ = writeln!(body, "{},{},{},{},{},{},{}", r.dataset, r.model, r.factor, r.seed, r.subset, r.accuracy, r.params);
        }
        ctx.append("results.csv", RESULTS_HEADER, &body)?;
        let summary = summarize(&rows);
        let mut s = String::from("model,factor,mean,sd,runs\n");
        for r in &summary {
            let _ = writeln!(s, "{},{},{},{},{}", r.model, r.factor, r.mean, r.sd, r.runs);
        }
        ctx.write("summary.csv", s)?;
        ctx.write("loss_curves.csv", curves)?;
        let mut series: Vec<Series> = Vec::new();
        for r in &summary {
            match series.iter_mut().find(|s| s.name == r.model) {
                Some(s) => s.points.push((r.factor as f64, r.mean, r.sd)),
                None => series.push(Series { name: r.model.clone(), points: vec![(r.factor as f64, r.mean, r.sd)] }),
            }
        }
        ctx.write("accuracy.svg", line_chart(&series, "expansion factor", "test accuracy"))?;
        Ok(())
    })
}

pub fn ablate(env: &Env, a: &AblateArgs) -> Result<()> {
    let cfg = vision_config(&a.images, &a.reservoir, &a.train);
    let arms: Vec<Vec<String>> = a
        .modality
        .iter()
        .map(|m| m.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
        .collect();
    if arms.iter().any(Vec::is_empty) {
        return Err(CliError::Usage("--modality needs at least one tag".into()));
    }
    env.experiment("ablate", &Snapshot { args: a, resolved: &cfg }, |ctx| {
        ctx.seeds(&a.seed);
        let (base, _) = load_connectome(&a.connectome, &env.data_root, Some(ctx))?;
        let (train_set, test_set) = load_images(&a.images, &env.data_root, ctx)?;
        let mut rows = String::new();
        let mut curves = String::from("modalities,seed,epoch,loss\n");
        for arm in &arms {
            let neurons = modality_targets(&base, arm)?.len();
            let label = arm.join("+");
            let spec = AblationSpec { modalities: arm.clone(), steps: a.reservoir.steps, delete_excluded: a.delete_excluded };
            for &seed in &a.seed {
                let t0 = Instant::now();
                let (train_data, test_data) = prepare(&train_set, &test_set, &cfg, seed)?;
                let out = run_ablation(&base, &spec, &train_data, &test_data, &cfg, seed)?;
                check_frozen(&out.reservoir_checksum_before, &out.reservoir_checksum_after)?;
                ctx.time(format!("{label} seed={seed}"), t0.elapsed().as_secs_f64());
                println!(
                    "{} {label} ({neurons} neurons / T={}) seed={seed}: accuracy {:.4}",
                    a.images.dataset, a.reservoir.steps, out.accuracy
                );
                push_curve(&mut curves, &format!("{label},{seed}"), &out.report);
                let _ = writeln!(
                    rows,
                    "{},{label},{neurons},{},{},{seed},{},{},{}",
                    a.images.dataset,
                    a.reservoir.steps,
                    a.delete_excluded,
                    train_data.len(),
                    out.accuracy,
                    out.params
                );
            }
        }
        ctx.append("ablation.csv", ABLATION_HEADER, &rows)?;
        ctx.write("loss_curves.csv", curves)?;
        Ok(())
    })
}
