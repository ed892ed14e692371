use std::sync::Arc;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bpu_core::connectome::{normalize, NormScheme, SignedConnectome};
use bpu_core::readout::{
    argmax, evaluate, predict, train, BaselineMlp, BpuModel, Dataset, Labels, Loss, ReadoutInit, TrainConfig, Trainable,
};
use bpu_core::reservoir::{BpuConfig, ReadoutMode, Reservoir};
use bpu_core::surrogate::{generate, SurrogateSpec};
use bpu_core::vision::{
    cifar_batch_bytes, idx_images_bytes, idx_labels_bytes, parse_cifar_batch, parse_idx_images, parse_idx_labels,
    run_ablation, run_scaling_experiment, AblationSpec, ImageDataset, Source, Split, VisionConfig,
};

fn reservoir(seed: u64) -> Arc<Reservoir> {
    let c = generate(&SurrogateSpec::small([16, 48, 12], 500, seed)).unwrap();
    Arc::new(Reservoir::new(&normalize(&c, NormScheme::AbsMax).unwrap().0))
}

/// Two well separated clusters in 6 dimensions, one per class.
fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 6));
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let class = r % 2;
        for k in 0..6 {
            let center = if (k % 2 == 0) == (class == 0) { 1.0 } else { -1.0 };
            x[[r, k]] = center + rng.random_range(-0.3..0.3);
        }
        y.push(class);
    }
    Dataset::new(x, Labels::Classes(y)).unwrap()
}

fn model(seed: u64, outputs: usize) -> BpuModel {
    let cfg = BpuConfig { readout_mode: ReadoutMode::AllFinal, ..BpuConfig::default() };
    BpuModel::new(reservoir(seed), cfg, 6, outputs, None, ReadoutInit::Uniform, seed).unwrap()
}

fn snapshot<M: Trainable>(m: &mut M) -> Vec<Vec<u64>> {
    m.params_mut().iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect()
}

#[test]
fn separable_toy_set_trains_monotonically() {
    let data = blobs(64, 1);
    let mut m = model(2, 2);
    let cfg = TrainConfig { learning_rate: 1e-2, epochs: 30, batch_size: 64, ..TrainConfig::default() };
    let report = train(&mut m, &data, &cfg, |_, _, _| {}).unwrap();
    for w in report.loss_curve.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss rose: {:?}", report.loss_curve);
    }
    assert_eq!(evaluate(&m, &data, Loss::CrossEntropy).unwrap(), 1.0);
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let data = blobs(40, 3);
    for kind in ["bpu", "mlp"] {
        let cfg = TrainConfig { learning_rate: 0.0, epochs: 3, batch_size: 8, ..TrainConfig::default() };
        if kind == "bpu" {
            let mut m = model(4, 2);
            let before = snapshot(&mut m);
            train(&mut m, &data, &cfg, |_, _, _| {}).unwrap();
            assert_eq!(snapshot(&mut m), before);
        } else {
            let mut m = BaselineMlp::build(6, 2, 400, 4).unwrap();
            let before = snapshot(&mut m);
            train(&mut m, &data, &cfg, |_, _, _| {}).unwrap();
            assert_eq!(snapshot(&mut m), before);
        }
    }
}

#[test]
fn frozen_weights_survive_training() {
    let data = blobs(40, 5);
    let cfg = TrainConfig { learning_rate: 5e-2, epochs: 3, batch_size: 8, ..TrainConfig::default() };
    let mut m = model(6, 2);
    let before = m.reservoir.checksum();
    train(&mut m, &data, &cfg, |_, _, _| {}).unwrap();
    assert_eq!(m.reservoir.checksum(), before);

    let mut mlp = BaselineMlp::build(6, 2, m.trainable_param_count(), 6).unwrap();
    let before = mlp.middle_checksum();
    train(&mut mlp, &data, &cfg, |_, _, _| {}).unwrap();
    assert_eq!(mlp.middle_checksum(), before);
}

#[test]
fn same_seed_same_loss_curve() {
    let data = blobs(50, 7);
    let cfg = TrainConfig { learning_rate: 1e-2, epochs: 4, batch_size: 16, seed: 11, ..TrainConfig::default() };
    let run = || {
        let mut m = model(8, 2);
        train(&mut m, &data, &cfg, |_, _, _| {}).unwrap().loss_curve
    };
    let (a, b) = (run(), run());
    assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn accuracy_is_the_argmax_hit_rate() {
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = Array2::from_shape_fn((n, 6), |_| rng.random_range(-1.0..1.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
    let data = Dataset::new(x, Labels::Classes(labels.clone())).unwrap();
    let m = model(10, 10);
    let acc = evaluate(&m, &data, Loss::CrossEntropy).unwrap();
    let preds = predict(&m, &data, Loss::CrossEntropy, 100).unwrap();
    let hits = (0..n).filter(|&j| argmax(preds.column(j).iter().copied()) == labels[j]).count();
    assert_eq!(acc, hits as f64 / n as f64);
    // Labels are independent of the inputs, so accuracy is Binomial(n, 0.1) / n.
    let se = (0.1f64 * 0.9 / n as f64).sqrt();
    assert!((acc - 0.1).abs() < 4.0 * se, "accuracy {acc}");
}

fn tagged_graph() -> SignedConnectome {
    let spec = SurrogateSpec {
        modalities: vec![("a".into(), 6), ("b".into(), 4), ("c".into(), 6)],
        ..SurrogateSpec::small([16, 40, 10], 400, 12)
    };
    generate(&spec).unwrap()
}

fn images(n: usize, seed: u64) -> ImageDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageDataset {
        source: Source::Mnist,
        split: Split::Train,
        shape: (4, 4, 1),
        pixels: (0..n * 16).map(|_| rng.random()).collect(),
        labels: (0..n).map(|i| (i % 10) as u8).collect(),
    }
}

fn tiny_config() -> VisionConfig {
    VisionConfig {
        train: TrainConfig { epochs: 2, batch_size: 16, learning_rate: 1e-2, ..TrainConfig::default() },
        subset: 60,
        test_subset: Some(30),
        ..VisionConfig::default()
    }
}

#[test]
fn ablation_keeps_the_recurrent_core() {
    let c = tagged_graph();
    let (train_set, test_set) = (images(80, 1), images(40, 2));
    let cfg = tiny_config();
    let (train_data, test_data) = bpu_core::vision::prepare(&train_set, &test_set, &cfg, 0).unwrap();
    let mut checksums = Vec::new();
    for arm in [vec!["a"], vec!["b", "c"], vec!["a", "b", "c"]] {
        let spec = AblationSpec { modalities: arm.iter().map(|s| s.to_string()).collect(), steps: 3, delete_excluded: false };
        let out = run_ablation(&c, &spec, &train_data, &test_data, &cfg, 0).unwrap();
        assert_eq!(out.reservoir_checksum_before, out.reservoir_checksum_after);
        checksums.push(out.reservoir_checksum_after);
    }
    assert!(checksums.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn scaling_experiment_is_deterministic() {
    let c = tagged_graph();
    let (train_set, test_set) = (images(80, 3), images(40, 4));
    let cfg = tiny_config();
    let a = run_scaling_experiment(&c, &[1, 2], &[0, 1], &train_set, &test_set, &cfg, true).unwrap();
    let b = run_scaling_experiment(&c, &[1, 2], &[0, 1], &train_set, &test_set, &cfg, true).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn idx_files_round_trip(n in 1usize..20, rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ImageDataset {
            source: Source::Mnist,
            split: Split::Test,
            shape: (rows, cols, 1),
            pixels: (0..n * rows * cols).map(|_| rng.random()).collect(),
            labels: (0..n).map(|_| rng.random_range(0..10)).collect(),
        };
        let images = idx_images_bytes(&d);
        let labels = idx_labels_bytes(&d);
        let (count, r, c, pixels) = parse_idx_images(&images, "images").unwrap();
        prop_assert_eq!((count, r, c), (n, rows, cols));
        prop_assert_eq!(&pixels, &d.pixels);
        prop_assert_eq!(parse_idx_labels(&labels, "labels").unwrap(), d.labels.clone());
        let again = ImageDataset { pixels, ..d.clone() };
        prop_assert_eq!(idx_images_bytes(&again), images);
    }

    #[test]
    fn cifar_batches_round_trip(n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ImageDataset {
            source: Source::Cifar10,
            split: Split::Train,
            shape: (32, 32, 3),
            pixels: (0..n * 3072).map(|_| rng.random()).collect(),
            labels: (0..n).map(|_| rng.random_range(0..10)).collect(),
        };
        let bytes = cifar_batch_bytes(&d);
        let (labels, pixels) = parse_cifar_batch(&bytes, "batch").unwrap();
        prop_assert_eq!(&pixels, &d.pixels);
        prop_assert_eq!(&labels, &d.labels);
        prop_assert_eq!(cifar_batch_bytes(&ImageDataset { pixels, labels, ..d }), bytes);
    }
}

#[test]
fn baseline_matches_the_bpu_budget() {
    for (dim, seed) in [(784, 0), (3072, 1), (6, 2)] {
        let cfg = BpuConfig::default();
        let m = BpuModel::new(reservoir(seed), cfg, dim, 10, None, ReadoutInit::Uniform, seed).unwrap();
        let budget = m.trainable_param_count();
        let mlp = BaselineMlp::build(dim, 10, budget, seed).unwrap();
        assert_eq!(mlp.trainable_param_count() + mlp.widths.residual, budget);
        assert!((mlp.widths.residual as f64) < 0.005 * budget as f64);
    }
}
