use proptest::prelude::*;

use bpu_core::connectome::{normalize, NormScheme, SignedConnectome};
use bpu_core::dcsbm::{expand, Expansion};
use bpu_core::surrogate::{generate, SurrogateSpec};

fn edges(c: &SignedConnectome) -> Vec<(usize, usize, u64)> {
    c.edges().iter().map(|e| (e.source, e.target, e.weight.to_bits())).collect()
}

fn restricted(exp: &Expansion) -> Vec<(usize, usize, u64)> {
    let n0 = exp.n_original;
    exp.graph
        .edges()
        .iter()
        .filter(|e| e.source < n0 && e.target < n0)
        .map(|e| (e.source, e.target, e.weight.to_bits()))
        .collect()
}

/// Per block pair: summed new-to-new magnitudes, edge count, positive count.
fn new_block_stats(exp: &Expansion) -> [[(f64, usize, usize); 3]; 3] {
    let g = &exp.graph;
    let mut out = [[(0.0, 0, 0); 3]; 3];
    for e in g.edges() {
        if e.source >= exp.n_original && e.target >= exp.n_original {
            let cell = &mut out[g.pool_of(e.source).index()][g.pool_of(e.target).index()];
            cell.0 += e.weight.abs() / g.scale();
            cell.1 += 1;
            cell.2 += usize::from(e.weight > 0.0);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn original_subgraph_is_anchored(
        sizes in (2usize..15, 5usize..40, 2usize..15), factor in 1usize..=5, seed in any::<u64>(), normalized in any::<bool>()
    ) {
        let n = sizes.0 + sizes.1 + sizes.2;
        let mut c = generate(&SurrogateSpec::small([sizes.0, sizes.1, sizes.2], n * 4, seed)).unwrap();
        if normalized {
            c = normalize(&c, NormScheme::AbsMax).unwrap().0;
        }
        let exp = expand(&c, factor, seed.wrapping_add(1)).unwrap();
        prop_assert_eq!(exp.graph.n(), factor * c.n());
        prop_assert_eq!(&exp.graph.neurons()[..c.n()], c.neurons());
        prop_assert_eq!(restricted(&exp), edges(&c));
        if factor == 1 {
            prop_assert_eq!(edges(&exp.graph), edges(&c));
        }
    }

    #[test]
    fn same_seed_same_graph(sizes in (2usize..10, 5usize..30, 2usize..10), factor in 2usize..=4, seed in any::<u64>()) {
        let n = sizes.0 + sizes.1 + sizes.2;
        let c = generate(&SurrogateSpec::small([sizes.0, sizes.1, sizes.2], n * 4, seed)).unwrap();
        let a = expand(&c, factor, seed).unwrap();
        let b = expand(&c, factor, seed).unwrap();
        prop_assert_eq!(edges(&a.graph), edges(&b.graph));
        prop_assert_eq!(a.graph.neurons(), b.graph.neurons());
    }
}

#[test]
fn new_labels_follow_block_proportions() {
    let c = generate(&SurrogateSpec::small([100, 300, 100], 6000, 21)).unwrap();
    let exp = expand(&c, 5, 3).unwrap();
    let mut counts = [0usize; 3];
    for n in &exp.graph.neurons()[exp.n_original..] {
        counts[n.pool.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    let chi2: f64 = counts
        .iter()
        .zip(exp.params.proportions)
        .map(|(&k, p)| {
            let expected = p * total as f64;
            (k as f64 - expected).powi(2) / expected
        })
        .sum();
    // 99th percentile of chi-square with 2 degrees of freedom.
    assert!(chi2 < 9.2103, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn mean_weights_match_the_poisson_rates() {
    let c = generate(&SurrogateSpec::small([60, 180, 60], 4000, 5)).unwrap();
    let mut observed = [[0.0; 3]; 3];
    let mut expected = [[0.0; 3]; 3];
    for seed in 0..10 {
        let exp = expand(&c, 2, seed).unwrap();
        let stats = new_block_stats(&exp);
        let mut out_sum = [0.0; 3];
        let mut in_sum = [0.0; 3];
        for u in exp.n_original..exp.graph.n() {
            let g = exp.graph.pool_of(u).index();
            out_sum[g] += exp.theta_out[u];
            in_sum[g] += exp.theta_in[u];
        }
        for g in 0..3 {
            for h in 0..3 {
                observed[g][h] += stats[g][h].0;
                expected[g][h] += exp.params.omega[g][h] * out_sum[g] * in_sum[h];
            }
        }
    }
    for g in 0..3 {
        for h in 0..3 {
            let (o, e) = (observed[g][h], expected[g][h]);
            // Poisson totals: standard deviation sqrt(e) at most (counts are >= 1 per edge).
            assert!((o - e).abs() <= 5.0 * e.sqrt() + 1e-9, "block {g}->{h}: {o} vs {e}");
        }
    }
}

#[test]
fn edge_signs_match_block_probabilities() {
    let c = generate(&SurrogateSpec::small([60, 180, 60], 4000, 8)).unwrap();
    let exp = expand(&c, 3, 17).unwrap();
    let stats = new_block_stats(&exp);
    let mut checked = 0;
    for g in 0..3 {
        for h in 0..3 {
            let (_, n, pos) = stats[g][h];
            if n < 100 {
                continue;
            }
            let p = exp.params.p[g][h];
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-3);
            let p_hat = pos as f64 / n as f64;
            assert!((p_hat - p).abs() <= 4.0 * se, "block {g}->{h}: {p_hat} vs {p} over {n} edges");
            checked += 1;
        }
    }
    assert!(checked >= 5);
}
