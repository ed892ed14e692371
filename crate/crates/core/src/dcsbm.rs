//! Directed, signed, degree-corrected stochastic block model over the three
//! pools: closed-form fit, degree bootstrap, and expansion that keeps the
//! original graph as an exact submatrix.
//!
//! Random streams: stream 0 of the seeded ChaCha generator draws new labels
//! and degrees; row `u` of the expanded graph uses stream `u + 1`. Rows are
//! sampled in parallel and the result does not depend on thread count.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectome::{Edge, NeuronRecord, Pool, SignedConnectome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcsbmParams {
    /// Block-pair weight densities, `omega[g][h]` for edges from block `g` to `h`.
    pub omega: [[f64; 3]; 3],
    /// Probability that an edge from `g` to `h` is positive.
    pub p: [[f64; 3]; 3],
    /// True where `p` was set to 0.5 because the block pair has no edges.
    pub p_defaulted: [[bool; 3]; 3],
    /// `(theta_out, theta_in)` of every original neuron, grouped by block.
    pub degree_pairs: [Vec<(f64, f64)>; 3],
    pub proportions: [f64; 3],
    pub n0: usize,
}

/// Observed out- and in-strengths: `theta_out[i] = sum_j |W_ij|`, `theta_in[j] = sum_i |W_ij|`.
pub fn strengths(c: &SignedConnectome) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; c.n()];
    let mut inn = vec![0.0; c.n()];
    for e in c.edges() {
        out[e.source] += e.weight.abs();
        inn[e.target] += e.weight.abs();
    }
    (out, inn)
}

pub fn fit(c: &SignedConnectome) -> Result<DcsbmParams> {
    if c.n() == 0 || c.edge_count() == 0 {
        return Err(Error::Validation("cannot fit a block model to an empty connectome".into()));
    }
    let (theta_out, theta_in) = strengths(c);
    let mut block_weight = [[0.0f64; 3]; 3];
    let mut positive = [[0usize; 3]; 3];
    let mut nonzero = [[0usize; 3]; 3];
    for e in c.edges() {
        let (g, h) = (c.pool_of(e.source).index(), c.pool_of(e.target).index());
        block_weight[g][h] += e.weight.abs();
        nonzero[g][h] += 1;
        if e.weight > 0.0 {
            positive[g][h] += 1;
        }
    }
    let mut out_sum = [0.0f64; 3];
    let mut in_sum = [0.0f64; 3];
    let mut degree_pairs: [Vec<(f64, f64)>; 3] = Default::default();
    for i in 0..c.n() {
        let g = c.pool_of(i).index();
        out_sum[g] += theta_out[i];
        in_sum[g] += theta_in[i];
        degree_pairs[g].push((theta_out[i], theta_in[i]));
    }

    let mut omega = [[0.0; 3]; 3];
    let mut p = [[0.5; 3]; 3];
    let mut p_defaulted = [[false; 3]; 3];
    for g in 0..3 {
        for h in 0..3 {
            let denom = out_sum[g] * in_sum[h];
            omega[g][h] = if denom > 0.0 { block_weight[g][h] / denom } else { 0.0 };
            if nonzero[g][h] > 0 {
                p[g][h] = positive[g][h] as f64 / nonzero[g][h] as f64;
            } else {
                p_defaulted[g][h] = true;
            }
        }
    }
    let n = c.n() as f64;
    Ok(DcsbmParams {
        omega,
        p,
        p_defaulted,
        proportions: c.pool_sizes().map(|k| k as f64 / n),
        degree_pairs,
        n0: c.n(),
    })
}

/// Bootstraps `count` paired strengths from `block` with replacement.
pub fn sample_degrees<R: Rng + ?Sized>(
    params: &DcsbmParams,
    block: Pool,
    count: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pool = &params.degree_pairs[block.index()];
    if count == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if pool.is_empty() {
        return Err(Error::Validation(format!("block {block} has no degree pairs to sample")));
    }
    let (mut outs, mut ins) = (Vec::with_capacity(count), Vec::with_capacity(count));
    for _ in 0..count {
        let (o, i) = pool[rng.random_range(0..pool.len())];
        outs.push(o);
        ins.push(i);
    }
    Ok((outs, ins))
}

/// An expanded graph together with the strengths used to sample it.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub graph: SignedConnectome,
    pub params: DcsbmParams,
    pub factor: usize,
    pub seed: u64,
    /// Strengths of all `N` nodes after rescaling; original nodes keep their
    /// observed out-strengths.
    pub theta_out: Vec<f64>,
    pub theta_in: Vec<f64>,
    pub n_original: usize,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poisson draw by CDF inversion for small means, library sampler otherwise.
fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 30.0 {
        return Poisson::new(lambda).expect("positive finite mean").sample(rng) as u64;
    }
    let mut u: f64 = rng.random();
    let mut k = 0u64;
    let mut pk = (-lambda).exp();
    while u > pk {
        u -= pk;
        k += 1;
        pk *= lambda / k as f64;
        if pk == 0.0 {
            break;
        }
    }
    k
}

pub fn expand(c: &SignedConnectome, factor: usize, seed: u64) -> Result<Expansion> {
    if !(1..=5).contains(&factor) {
        return Err(Error::Validation(format!("expansion factor must be in 1..=5, got {factor}")));
    }
    // The model is fit on synapse counts; a normalized input is rescaled back.
    let scale = c.scale();
    let counts = if scale == 1.0 { c.clone() } else { c.scaled(1.0 / scale) };
    let params = fit(&counts)?;
    let n0 = c.n();
    let (obs_out, obs_in) = strengths(&counts);
    if factor == 1 {
        return Ok(Expansion {
            graph: c.clone(),
            params,
            factor,
            seed,
            theta_out: obs_out,
            theta_in: obs_in,
            n_original: n0,
        });
    }
    let n = factor * n0;
    let mut rng = substream(seed, 0);

    let label_dist =
        rand::distr::weighted::WeightedIndex::new(params.proportions).map_err(|e| Error::Validation(e.to_string()))?;
    let mut labels: Vec<usize> = (0..n0).map(|i| c.pool_of(i).index()).collect();
    let mut theta_out = obs_out;
    let mut theta_in = obs_in;
    for _ in n0..n {
        let g = label_dist.sample(&mut rng);
        let (o, i) = sample_degrees(&params, Pool::from_index(g), 1, &mut rng)?;
        labels.push(g);
        theta_out.push(o[0]);
        theta_in.push(i[0]);
    }
    let sum_out: f64 = theta_out.iter().sum();
    let sum_in: f64 = theta_in.iter().sum();
    if sum_in > 0.0 {
        let r = sum_out / sum_in;
        theta_in.iter_mut().for_each(|t| *t *= r);
    }

    let omega = params.omega;
    let p = params.p;
    let rows: Vec<Vec<Edge>> = (0..n)
        .into_par_iter()
        .map(|u| {
            let mut rng = substream(seed, u as u64 + 1);
            let g = labels[u];
            let start = if u < n0 { n0 } else { 0 };
            let mut row = Vec::new();
            for v in start..n {
                let lambda = theta_out[u] * theta_in[v] * omega[g][labels[v]];
                let count = poisson(lambda, &mut rng);
                if count > 0 {
                    let sign = if rng.random_bool(p[g][labels[v]]) { 1.0 } else { -1.0 };
                    row.push(Edge {
                        source: u,
                        target: v,
                        weight: sign * count as f64,
                    });
                }
            }
            row
        })
        .collect();

    let mut edges: Vec<Edge> = c.edges().to_vec();
    // Sampled magnitudes are synapse counts; bring them to the input's scale.
    edges.extend(rows.into_iter().flatten().map(|mut e| {
        e.weight *= scale;
        e
    }));
    let mut neurons: Vec<NeuronRecord> = c.neurons().to_vec();
    let mut next_id = neurons.iter().map(|r| r.id).max().map_or(0, |m| m + 1);
    for &g in &labels[n0..] {
        neurons.push(NeuronRecord {
            id: next_id,
            pool: Pool::from_index(g),
            modality: None,
        });
        next_id += 1;
    }
    let graph = SignedConnectome::new(neurons, edges)?.with_scale(scale);
    Ok(Expansion {
        graph,
        params,
        factor,
        seed,
        theta_out,
        theta_in,
        n_original: n0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub from: Pool,
    pub to: Pool,
    /// Expected number of nonzero new-to-new edges, `sum (1 - exp(-lambda))`.
    pub expected_edges: f64,
    pub edges: usize,
    pub omega: f64,
    pub omega_hat: f64,
    pub omega_rel_err: f64,
    pub p: f64,
    pub p_hat: Option<f64>,
    pub p_abs_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub no_new_nodes: bool,
    pub new_nodes: usize,
    pub pairs: Vec<PairReport>,
}

/// Refits ω and p on the new-to-new subgraph, using the strengths the
/// sampler drew, and compares against the fitted parameters.
pub fn refit_check(exp: &Expansion, params: &DcsbmParams) -> RefitReport {
    let n0 = exp.n_original;
    let g = &exp.graph;
    let n = g.n();
    if n == n0 {
        return RefitReport {
            no_new_nodes: true,
            new_nodes: 0,
            pairs: Vec::new(),
        };
    }
    let scale = g.scale();
    let mut weight = [[0.0f64; 3]; 3];
    let mut nonzero = [[0usize; 3]; 3];
    let mut positive = [[0usize; 3]; 3];
    for e in g.edges() {
        if e.source >= n0 && e.target >= n0 {
            let (a, b) = (g.pool_of(e.source).index(), g.pool_of(e.target).index());
            weight[a][b] += e.weight.abs() / scale;
            nonzero[a][b] += 1;
            if e.weight > 0.0 {
                positive[a][b] += 1;
            }
        }
    }
    let mut members: [Vec<usize>; 3] = Default::default();
    for u in n0..n {
        members[g.pool_of(u).index()].push(u);
    }
    let mut pairs = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            let out_sum: f64 = members[a].iter().map(|&u| exp.theta_out[u]).sum();
            let in_sum: f64 = members[b].iter().map(|&v| exp.theta_in[v]).sum();
            let omega = params.omega[a][b];
            let mut expected = 0.0;
            for &u in &members[a] {
                let tu = exp.theta_out[u] * omega;
                for &v in &members[b] {
                    expected += -(-tu * exp.theta_in[v]).exp_m1();
                }
            }
            let omega_hat = if out_sum * in_sum > 0.0 { weight[a][b] / (out_sum * in_sum) } else { 0.0 };
            let omega_rel_err = if omega > 0.0 { (omega_hat - omega).abs() / omega } else { omega_hat.abs() };
            let p_hat = (nonzero[a][b] > 0).then(|| positive[a][b] as f64 / nonzero[a][b] as f64);
            pairs.push(PairReport {
                from: Pool::from_index(a),
                to: Pool::from_index(b),
                expected_edges: expected,
                edges: nonzero[a][b],
                omega,
                omega_hat,
                omega_rel_err,
                p: params.p[a][b],
                p_hat,
                p_abs_err: p_hat.map(|ph| (ph - params.p[a][b]).abs()),
            });
        }
    }
    RefitReport {
        no_new_nodes: false,
        new_nodes: n - n0,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, pool: Pool) -> NeuronRecord {
        NeuronRecord { id, pool, modality: None }
    }

    #[test]
    fn two_node_fit_by_hand() {
        let c = SignedConnectome::new(
            vec![rec(1, Pool::Sensory), rec(2, Pool::Internal)],
            vec![Edge { source: 0, target: 1, weight: 3.0 }],
        )
        .unwrap();
        let p = fit(&c).unwrap();
        assert!((p.omega[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.p[0][1], 1.0);
        assert_eq!(p.omega[1][0], 0.0);
        assert!(p.p_defaulted[1][0]);
        assert_eq!(p.p[1][0], 0.5);
        assert_eq!(p.degree_pairs[0], vec![(3.0, 0.0)]);
        assert_eq!(p.proportions, [0.5, 0.5, 0.0]);
    }

    #[test]
    fn empty_connectome_is_rejected() {
        let c = SignedConnectome::new(vec![], vec![]).unwrap();
        assert!(fit(&c).is_err());
    }

    #[test]
    fn degree_sampling_edge_cases() {
        let c = SignedConnectome::new(
            vec![rec(1, Pool::Sensory), rec(2, Pool::Internal)],
            vec![Edge { source: 0, target: 1, weight: 3.0 }],
        )
        .unwrap();
        let p = fit(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_degrees(&p, Pool::Sensory, 0, &mut rng).unwrap().0.len(), 0);
        let (o, i) = sample_degrees(&p, Pool::Sensory, 5, &mut rng).unwrap();
        assert!(o.iter().all(|&x| x == 3.0) && i.iter().all(|&x| x == 0.0));
        assert!(sample_degrees(&p, Pool::Output, 1, &mut rng).is_err());
    }

    #[test]
    fn factor_bounds() {
        let c = SignedConnectome::new(
            vec![rec(1, Pool::Sensory), rec(2, Pool::Internal)],
            vec![Edge { source: 0, target: 1, weight: 3.0 }],
        )
        .unwrap();
        assert!(expand(&c, 0, 1).is_err());
        assert!(expand(&c, 6, 1).is_err());
        let same = expand(&c, 1, 1).unwrap();
        assert_eq!(same.graph, c);
        assert!(refit_check(&same, &same.params).no_new_nodes);
    }

    #[test]
    fn small_lambda_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lambda = 0.3;
        let n = 200_000;
        let mean = (0..n).map(|_| poisson(lambda, &mut rng) as f64).sum::<f64>() / n as f64;
        assert!((mean - lambda).abs() < 4.0 * (lambda / n as f64).sqrt(), "{mean}");
    }
}
