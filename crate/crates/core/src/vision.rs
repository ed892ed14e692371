//! Image datasets, the BPU-vs-MLP classification harness, expansion scaling
//! and sensory-modality ablation.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectome::{normalize, NormScheme, Pool, SignedConnectome};
use crate::dcsbm;
use crate::error::{Error, Result};
use crate::readout::{
    bpu_param_count, evaluate, train, BaselineMlp, BpuModel, Dataset, Labels, ReadoutInit, TrainConfig, TrainReport,
    Trainable,
};
use crate::reservoir::{BpuConfig, Reservoir};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const CIFAR_RECORD: usize = 3073;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Mnist,
    Cifar10,
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mnist" => Ok(Source::Mnist),
            "cifar10" | "cifar-10" => Ok(Source::Cifar10),
            _ => Err(format!("unknown dataset `{s}`")),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Mnist => "mnist",
            Source::Cifar10 => "cifar10",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Raw 8-bit images, one flattened row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub source: Source,
    pub split: Split,
    /// `(rows, cols, channels)` of one image.
    pub shape: (usize, usize, usize),
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.dim()..(i + 1) * self.dim()]
    }

    /// Selected samples scaled to `[0, 1]`.
    pub fn to_dataset(&self, idx: &[usize]) -> Dataset {
        let d = self.dim();
        let mut x = Array2::zeros((idx.len(), d));
        for (row, &i) in idx.iter().enumerate() {
            for (k, &p) in self.image(i).iter().enumerate() {
                x[[row, k]] = p as f64 / 255.0;
            }
        }
        let labels = Labels::Classes(idx.iter().map(|&i| self.labels[i] as usize).collect());
        Dataset::new(x, labels).expect("matching lengths")
    }

    pub fn all(&self) -> Dataset {
        self.to_dataset(&(0..self.len()).collect::<Vec<_>>())
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses an IDX image file: magic 2051, count, rows, cols, then pixels.
pub fn parse_idx_images(bytes: &[u8], what: &str) -> Result<(usize, usize, usize, Vec<u8>)> {
    if bytes.len() < 16 {
        return Err(Error::Length { what: what.into(), expected: 16, found: bytes.len() });
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("{what}: bad IDX image magic {magic}")));
    }
    let (n, rows, cols) = (be_u32(bytes, 4) as usize, be_u32(bytes, 8) as usize, be_u32(bytes, 12) as usize);
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Length { what: what.into(), expected, found: bytes.len() });
    }
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], what: &str) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(Error::Length { what: what.into(), expected: 8, found: bytes.len() });
    }
    let magic = be_u32(bytes, 0);
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("{what}: bad IDX label magic {magic}")));
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() != 8 + n {
        return Err(Error::Length { what: what.into(), expected: 8 + n, found: bytes.len() });
    }
    let labels = bytes[8..].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("{what}: label {bad} outside 0..9")));
    }
    Ok(labels)
}

pub fn idx_images_bytes(d: &ImageDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + d.pixels.len());
    for v in [IDX_IMAGES_MAGIC, d.len() as u32, d.shape.0 as u32, d.shape.1 as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&d.pixels);
    out
}

pub fn idx_labels_bytes(d: &ImageDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + d.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(d.len() as u32).to_be_bytes());
    out.extend_from_slice(&d.labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_mnist_split(dir: &Path, prefix: &str, split: Split) -> Result<ImageDataset> {
    let ipath = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let lpath = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    let (n, rows, cols, pixels) = parse_idx_images(&read(&ipath)?, &ipath.display().to_string())?;
    let labels = parse_idx_labels(&read(&lpath)?, &lpath.display().to_string())?;
    if labels.len() != n {
        return Err(Error::Format(format!("{n} MNIST images but {} labels", labels.len())));
    }
    if rows * cols != 784 {
        return Err(Error::Format(format!("MNIST images are {rows}x{cols}, expected 28x28")));
    }
    Ok(ImageDataset { source: Source::Mnist, split, shape: (rows, cols, 1), pixels, labels })
}

/// Reads the four standard IDX files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<(ImageDataset, ImageDataset)> {
    Ok((load_mnist_split(dir, "train", Split::Train)?, load_mnist_split(dir, "t10k", Split::Test)?))
}

/// Parses CIFAR-10 binary records: one label byte then 3072 channel-planar pixels.
pub fn parse_cifar_batch(bytes: &[u8], what: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format(format!(
            "{what}: {} bytes is not a multiple of the {CIFAR_RECORD}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * 3072);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(Error::Format(format!("{what}: label {} outside 0..9", rec[0])));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

pub fn cifar_batch_bytes(d: &ImageDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(d.len() * CIFAR_RECORD);
    for i in 0..d.len() {
        out.push(d.labels[i]);
        out.extend_from_slice(d.image(i));
    }
    out
}

/// Reads `data_batch_{1..5}.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<(ImageDataset, ImageDataset)> {
    let mut train = ImageDataset { source: Source::Cifar10, split: Split::Train, shape: (32, 32, 3), pixels: Vec::new(), labels: Vec::new() };
    for k in 1..=5 {
        let path = dir.join(format!("data_batch_{k}.bin"));
        let (l, p) = parse_cifar_batch(&read(&path)?, &path.display().to_string())?;
        train.labels.extend(l);
        train.pixels.extend(p);
    }
    let path = dir.join("test_batch.bin");
    let (labels, pixels) = parse_cifar_batch(&read(&path)?, &path.display().to_string())?;
    let test = ImageDataset { source: Source::Cifar10, split: Split::Test, shape: (32, 32, 3), pixels, labels };
    Ok((train, test))
}

/// Files read by the loader of `source` from its directory.
pub fn dataset_files(source: Source, dir: &Path) -> Vec<PathBuf> {
    let names: Vec<String> = match source {
        Source::Mnist => ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        Source::Cifar10 => (1..=5)
            .map(|k| format!("data_batch_{k}.bin"))
            .chain(["test_batch.bin".to_string()])
            .collect(),
    };
    names.into_iter().map(|n| dir.join(n)).collect()
}

/// Loads `source` from the directory holding its files.
pub fn load_dir(source: Source, dir: &Path) -> Result<(ImageDataset, ImageDataset)> {
    match source {
        Source::Mnist => load_mnist(dir),
        Source::Cifar10 => load_cifar10(dir),
    }
}

pub fn load(source: Source, data_root: &Path) -> Result<(ImageDataset, ImageDataset)> {
    match source {
        Source::Mnist => load_mnist(&data_root.join("mnist")),
        Source::Cifar10 => load_cifar10(&data_root.join("cifar10")),
    }
}

/// `n` indices with class frequencies proportional to the full set
/// (largest-remainder rounding), drawn without replacement.
pub fn stratified_subset(labels: &[u8], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > labels.len() {
        return Err(Error::Validation(format!("subset of {n} from {} samples", labels.len())));
    }
    let classes: BTreeSet<u8> = labels.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = classes
        .iter()
        .map(|&c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    let total = labels.len() as f64;
    let quotas: Vec<f64> = by_class.iter().map(|m| n as f64 * m.len() as f64 / total).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..take.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    let short = n - take.iter().sum::<usize>();
    for &k in order.iter().take(short) {
        take[k] += 1;
    }
    let mut out = Vec::with_capacity(n);
    for (members, k) in by_class.iter_mut().zip(take) {
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..k]);
    }
    out.sort_unstable();
    Ok(out)
}

/// One classification run on a prepared train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionConfig {
    pub bpu: BpuConfig,
    pub train: TrainConfig,
    pub norm: NormScheme,
    pub subset: usize,
    /// Evaluate on the first `n` test images of a stratified draw; `None` = all.
    pub test_subset: Option<usize>,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            bpu: BpuConfig::default(),
            train: TrainConfig { epochs: 20, ..TrainConfig::default() },
            norm: NormScheme::AbsMax,
            subset: 10_000,
            test_subset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub accuracy: f64,
    pub params: usize,
    pub report: TrainReport,
    pub reservoir_checksum_before: String,
    pub reservoir_checksum_after: String,
}

/// Train-set and test-set views for one seed.
pub fn prepare(train_set: &ImageDataset, test_set: &ImageDataset, cfg: &VisionConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    let train_idx = stratified_subset(&train_set.labels, cfg.subset.min(train_set.len()), seed)?;
    let test_idx = match cfg.test_subset {
        Some(n) => stratified_subset(&test_set.labels, n.min(test_set.len()), seed)?,
        None => (0..test_set.len()).collect(),
    };
    Ok((train_set.to_dataset(&train_idx), test_set.to_dataset(&test_idx)))
}

/// Trains projections around the (already normalized) connectome.
pub fn run_bpu(
    connectome: &SignedConnectome,
    targets: Option<Vec<usize>>,
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &VisionConfig,
    seed: u64,
) -> Result<RunOutcome> {
    train_bpu(connectome, targets, train_data, test_data, cfg, seed).map(|(out, _)| out)
}

/// [`run_bpu`] that also hands back the trained model.
pub fn train_bpu(
    connectome: &SignedConnectome,
    targets: Option<Vec<usize>>,
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &VisionConfig,
    seed: u64,
) -> Result<(RunOutcome, BpuModel)> {
    let reservoir = Arc::new(Reservoir::new(connectome));
    let before = reservoir.checksum();
    let mut model = BpuModel::new(reservoir.clone(), cfg.bpu, train_data.dim(), 10, targets, ReadoutInit::Uniform, seed)?;
    let tc = TrainConfig { seed, ..cfg.train.clone() };
    let report = train(&mut model, train_data, &tc, |_, _, _| {})?;
    let accuracy = evaluate(&model, test_data, tc.loss)?;
    let outcome = RunOutcome {
        accuracy,
        params: model.trainable_param_count(),
        report,
        reservoir_checksum_before: before,
        reservoir_checksum_after: reservoir.checksum(),
    };
    Ok((outcome, model))
}

/// Trains the parameter-matched MLP.
pub fn run_baseline(param_budget: usize, train_data: &Dataset, test_data: &Dataset, cfg: &VisionConfig, seed: u64) -> Result<RunOutcome> {
    let mut model = BaselineMlp::build(train_data.dim(), 10, param_budget, seed)?;
    let before = model.middle_checksum();
    let tc = TrainConfig { seed, ..cfg.train.clone() };
    let report = train(&mut model, train_data, &tc, |_, _, _| {})?;
    let accuracy = evaluate(&model, test_data, tc.loss)?;
    Ok(RunOutcome {
        accuracy,
        params: model.trainable_param_count(),
        report,
        reservoir_checksum_before: before,
        reservoir_checksum_after: model.middle_checksum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: Source,
    pub model: String,
    pub factor: usize,
    pub seed: u64,
    pub subset: usize,
    pub accuracy: f64,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub factor: usize,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let keys: BTreeSet<(String, usize)> = rows.iter().map(|r| (r.model.clone(), r.factor)).collect();
    keys.into_iter()
        .map(|(model, factor)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.model == model && r.factor == factor)
                .map(|r| r.accuracy)
                .collect();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let sd = if acc.len() > 1 {
                (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            SummaryRow { model, factor, mean, sd, runs: acc.len() }
        })
        .collect()
}

/// Expands the raw connectome per factor and seed, trains BPU projections and
/// a size-matched MLP on the same subset, and returns one row per run.
pub fn run_scaling_experiment(
    base: &SignedConnectome,
    factors: &[usize],
    seeds: &[u64],
    train_set: &ImageDataset,
    test_set: &ImageDataset,
    cfg: &VisionConfig,
    with_baseline: bool,
) -> Result<Vec<ResultRow>> {
    if let Some(&bad) = factors.iter().find(|&&f| !(1..=5).contains(&f)) {
        return Err(Error::Validation(format!("expansion factor {bad} outside 1..=5")));
    }
    let mut rows = Vec::new();
    for &factor in factors {
        for &seed in seeds {
            let expanded = dcsbm::expand(base, factor, seed)?.graph;
            let (graph, _) = normalize(&expanded, cfg.norm)?;
            let (train_data, test_data) = prepare(train_set, test_set, cfg, seed)?;
            let out = run_bpu(&graph, None, &train_data, &test_data, cfg, seed)?;
            log::info!("{} F={factor} seed={seed}: bpu {:.4}", train_set.source, out.accuracy);
            rows.push(ResultRow {
                dataset: train_set.source,
                model: "bpu".into(),
                factor,
                seed,
                subset: train_data.len(),
                accuracy: out.accuracy,
                params: out.params,
            });
            if with_baseline {
                let base_out = run_baseline(out.params, &train_data, &test_data, cfg, seed)?;
                log::info!("{} F={factor} seed={seed}: mlp {:.4}", train_set.source, base_out.accuracy);
                rows.push(ResultRow {
                    dataset: train_set.source,
                    model: "mlp".into(),
                    factor,
                    seed,
                    subset: train_data.len(),
                    accuracy: base_out.accuracy,
                    params: base_out.params,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub modalities: Vec<String>,
    pub steps: usize,
    /// Remove excluded sensory neurons from the graph instead of only
    /// withholding their input.
    pub delete_excluded: bool,
}

/// Sensory-pool positions of neurons tagged with any of `modalities`.
pub fn modality_targets(c: &SignedConnectome, modalities: &[String]) -> Result<Vec<usize>> {
    let known: HashSet<&str> = c.neurons().iter().filter_map(|n| n.modality.as_deref()).collect();
    for m in modalities {
        if !known.contains(m.as_str()) {
            return Err(Error::Validation(format!("unknown modality tag `{m}`")));
        }
    }
    let wanted: HashSet<&str> = modalities.iter().map(String::as_str).collect();
    let targets: Vec<usize> = c
        .pool(Pool::Sensory)
        .iter()
        .enumerate()
        .filter(|&(_, &i)| c.neurons()[i].modality.as_deref().is_some_and(|m| wanted.contains(m)))
        .map(|(local, _)| local)
        .collect();
    if targets.is_empty() {
        return Err(Error::Validation("ablation retains no sensory neurons".into()));
    }
    Ok(targets)
}

/// Routes input only to the retained modalities; the recurrent core is kept
/// unless `delete_excluded` is set.
pub fn run_ablation(
    connectome: &SignedConnectome,
    spec: &AblationSpec,
    train_data: &Dataset,
    test_data: &Dataset,
    cfg: &VisionConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let targets = modality_targets(connectome, &spec.modalities)?;
    let cfg = VisionConfig { bpu: BpuConfig { steps: spec.steps, ..cfg.bpu }, ..cfg.clone() };
    if spec.delete_excluded {
        let keep: HashSet<usize> = targets.iter().map(|&l| connectome.pool(Pool::Sensory)[l]).collect();
        let remove: HashSet<usize> = connectome
            .pool(Pool::Sensory)
            .iter()
            .copied()
            .filter(|i| !keep.contains(i))
            .collect();
        let pruned = connectome.without_neurons(&remove)?;
        let (graph, _) = normalize(&pruned, cfg.norm)?;
        return run_bpu(&graph, None, train_data, test_data, &cfg, seed);
    }
    let (graph, _) = normalize(connectome, cfg.norm)?;
    run_bpu(&graph, Some(targets), train_data, test_data, &cfg, seed)
}

/// Parameter count of the BPU classifier for a given connectome and config.
pub fn classifier_params(c: &SignedConnectome, input_dim: usize, targets: usize, bpu: &BpuConfig) -> usize {
    let feat = Reservoir::new(c).feature_dim(bpu);
    bpu_param_count(input_dim, targets, feat, 10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_idx() -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        for v in [2051u32, 2, 28, 28] {
            img.extend_from_slice(&v.to_be_bytes());
        }
        img.extend(std::iter::repeat_n(0u8, 784));
        img.extend(std::iter::repeat_n(255u8, 784));
        let mut lab = Vec::new();
        for v in [2049u32, 2] {
            lab.extend_from_slice(&v.to_be_bytes());
        }
        lab.extend([3u8, 9]);
        (img, lab)
    }

    #[test]
    fn idx_parse_scale_and_reserialize() {
        let (img, lab) = tiny_idx();
        let (n, r, c, pixels) = parse_idx_images(&img, "img").unwrap();
        let labels = parse_idx_labels(&lab, "lab").unwrap();
        let d = ImageDataset { source: Source::Mnist, split: Split::Train, shape: (r, c, 1), pixels, labels };
        assert_eq!(n, 2);
        let data = d.all();
        assert!(data.inputs.row(0).iter().all(|&v| v == 0.0));
        assert!(data.inputs.row(1).iter().all(|&v| v == 1.0));
        assert_eq!(idx_images_bytes(&d), img);
        assert_eq!(idx_labels_bytes(&d), lab);
    }

    #[test]
    fn idx_errors() {
        let (mut img, _) = tiny_idx();
        assert!(matches!(parse_idx_images(&img[..100], "t"), Err(Error::Length { .. })));
        img[3] = 1;
        assert!(matches!(parse_idx_images(&img, "t"), Err(Error::Format(_))));
    }

    #[test]
    fn cifar_records() {
        let mut bytes = vec![9u8];
        bytes.extend((0..3072).map(|i| (i % 256) as u8));
        let (labels, pixels) = parse_cifar_batch(&bytes, "t").unwrap();
        assert_eq!(labels, vec![9]);
        assert_eq!(pixels[1024], 0);
        let d = ImageDataset { source: Source::Cifar10, split: Split::Test, shape: (32, 32, 3), pixels, labels };
        assert_eq!(cifar_batch_bytes(&d), bytes);
        assert!(matches!(parse_cifar_batch(&bytes[..3000], "t"), Err(Error::Format(_))));
    }

    #[test]
    fn stratified_subset_keeps_class_balance() {
        let labels: Vec<u8> = (0..1000).map(|i| if i < 700 { 0 } else { 1 }).collect();
        let idx = stratified_subset(&labels, 101, 4).unwrap();
        assert_eq!(idx.len(), 101);
        let ones = idx.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(ones, 30);
        assert_eq!(idx, stratified_subset(&labels, 101, 4).unwrap());
        assert!(stratified_subset(&labels, 1001, 0).is_err());
    }
}
