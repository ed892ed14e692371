use ndarray::Array1;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bpu_core::connectome::{normalize, NormScheme, SignedConnectome};
use bpu_core::reservoir::{Activation, BpuConfig, BpuState, ReadoutMode, Reservoir};
use bpu_core::surrogate::{generate, SurrogateSpec};
use bpu_testkit::linalg::{central_difference, rel_err};

const MODES: [ReadoutMode; 3] = [ReadoutMode::OutputFinal, ReadoutMode::AllFinal, ReadoutMode::OutputTrajectory];

fn graph(sizes: [usize; 3], seed: u64, excitatory: f64) -> SignedConnectome {
    let n: usize = sizes.iter().sum();
    let spec = SurrogateSpec { excitatory: [excitatory; 3], ..SurrogateSpec::small(sizes, n * 5, seed) };
    normalize(&generate(&spec).unwrap(), NormScheme::Spectral(0.9)).unwrap().0
}

fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(lo..hi))
}

fn add(a: &BpuState, b: &BpuState, wa: f64, wb: f64) -> BpuState {
    BpuState { s: &a.s * wa + &b.s * wb, i: &a.i * wa + &b.i * wb, o: &a.o * wa + &b.o * wb }
}

fn max_abs_diff(a: &BpuState, b: &BpuState) -> f64 {
    [(&a.s, &b.s), (&a.i, &b.i), (&a.o, &b.o)]
        .iter()
        .flat_map(|(x, y)| x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relu_trajectories_are_nonnegative(seed in any::<u64>(), steps in 1usize..8) {
        let c = graph([12, 40, 10], seed, 0.5);
        let r = Reservoir::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e0 = random_vec(12, -2.0, 2.0, &mut rng);
        let cfg = BpuConfig { steps, ..BpuConfig::default() };
        let traj = r.run(e0.view(), &cfg).unwrap();
        prop_assert_eq!(traj.states.len(), steps + 1);
        for st in &traj.states {
            prop_assert!(st.s.iter().chain(st.i.iter()).chain(st.o.iter()).all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_input_stays_at_zero(seed in any::<u64>(), steps in 1usize..8, tanh in any::<bool>()) {
        let c = graph([8, 30, 6], seed, 0.5);
        let r = Reservoir::new(&c);
        let activation = if tanh { Activation::Tanh } else { Activation::Relu };
        let cfg = BpuConfig { steps, activation, ..BpuConfig::default() };
        let traj = r.run(Array1::zeros(8).view(), &cfg).unwrap();
        for st in &traj.states {
            prop_assert!(st.s.iter().chain(st.i.iter()).chain(st.o.iter()).all(|&v| v == 0.0));
        }
    }

    /// With only excitatory weights and nonnegative inputs every unit stays
    /// active, so one step is exactly linear in (state, input).
    #[test]
    fn step_is_linear_when_masks_are_fixed(seed in any::<u64>(), wa in 0.0f64..3.0, wb in 0.0f64..3.0) {
        let c = graph([10, 30, 8], seed, 1.0);
        let r = Reservoir::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let state = |rng: &mut ChaCha8Rng| BpuState {
            s: random_vec(10, 0.0, 1.0, rng),
            i: random_vec(30, 0.0, 1.0, rng),
            o: random_vec(8, 0.0, 1.0, rng),
        };
        let (x1, x2) = (state(&mut rng), state(&mut rng));
        let (e1, e2) = (random_vec(10, 0.0, 1.0, &mut rng), random_vec(10, 0.0, 1.0, &mut rng));
        let combined = r.step(&add(&x1, &x2, wa, wb), (&e1 * wa + &e2 * wb).view(), Activation::Relu).unwrap();
        let y1 = r.step(&x1, e1.view(), Activation::Relu).unwrap();
        let y2 = r.step(&x2, e2.view(), Activation::Relu).unwrap();
        prop_assert!(max_abs_diff(&combined, &add(&y1, &y2, wa, wb)) < 1e-10);
    }

    #[test]
    fn backward_matches_central_differences(
        sizes in (3usize..20, 10usize..60, 3usize..20), seed in any::<u64>(), steps in 1usize..6,
        tanh in any::<bool>(), mode in 0usize..3,
    ) {
        let c = graph([sizes.0, sizes.1, sizes.2], seed, 0.6);
        prop_assume!(c.n() <= 100);
        let r = Reservoir::new(&c);
        let activation = if tanh { Activation::Tanh } else { Activation::Relu };
        let cfg = BpuConfig { steps, activation, readout_mode: MODES[mode] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e0 = random_vec(sizes.0, -1.0, 1.0, &mut rng);
        let traj = r.run(e0.view(), &cfg).unwrap();
        let g = random_vec(r.feature_dim(&cfg), -1.0, 1.0, &mut rng);
        let grad = r.backward(&traj, g.view(), cfg.readout_mode).unwrap();
        let mut objective = |x: &[f64]| {
            let t = r.run(Array1::from_vec(x.to_vec()).view(), &cfg).unwrap();
            r.features(&t, cfg.readout_mode).dot(&g)
        };
        for k in 0..sizes.0 {
            // A ReLU kink within h of the probe point would make the difference meaningless.
            prop_assume!(tanh || e0[k].abs() > 1e-4);
            let numeric = central_difference(&mut objective, e0.as_slice().unwrap(), k, 1e-6);
            prop_assert!(rel_err(grad[k], numeric, 1e-6) < 1e-4, "coordinate {}: {} vs {}", k, grad[k], numeric);
        }
    }

    #[test]
    fn gradient_vanishes_where_the_first_relu_is_off(seed in any::<u64>(), steps in 1usize..6) {
        let c = graph([15, 40, 10], seed, 0.6);
        let r = Reservoir::new(&c);
        let cfg = BpuConfig { steps, ..BpuConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e0 = random_vec(15, -1.0, 1.0, &mut rng);
        let traj = r.run(e0.view(), &cfg).unwrap();
        let g = random_vec(r.feature_dim(&cfg), -1.0, 1.0, &mut rng);
        let grad = r.backward(&traj, g.view(), cfg.readout_mode).unwrap();
        for k in 0..15 {
            if e0[k] < 0.0 {
                prop_assert_eq!(grad[k], 0.0);
            }
        }
    }
}
