//! Seeded synthetic connectomes with a larva-like pool structure.
//!
//! Used when the real wiring diagram is not on disk, and for small random
//! graphs in tests. Degree propensities are lognormal, synapse counts are
//! `1 + Geometric`, and each presynaptic neuron has one sign.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, LogNormal};

use crate::connectome::{Edge, NeuronRecord, Pool, SignedConnectome};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    /// Sensory, internal, output.
    pub pool_sizes: [usize; 3],
    /// Target number of distinct (source, target) pairs.
    pub edges: usize,
    /// Fraction of edges in each `[from][to]` pool pair; normalized internally.
    pub block_fractions: [[f64; 3]; 3],
    /// Probability that a neuron of each pool is excitatory.
    pub excitatory: [f64; 3],
    /// Sigma of the lognormal degree propensities.
    pub degree_sigma: f64,
    /// Success probability of the geometric synapse-count tail.
    pub count_p: f64,
    /// Modality tags and their sizes; must sum to the sensory pool size or be empty.
    pub modalities: Vec<(String, usize)>,
    pub seed: u64,
}

/// Sensory modality groups of the larva-like surrogate. Respiratory and
/// sight sizes follow the published counts; the rest are filler that sums to 430.
pub fn larva_modalities() -> Vec<(String, usize)> {
    [
        ("olfactory", 42),
        ("gustatory-external", 80),
        ("gustatory-pharyngeal", 38),
        ("enteric", 42),
        ("thermosensory", 20),
        ("sight", 29),
        ("nociceptive", 24),
        ("mechanosensory-chordotonal", 62),
        ("mechanosensory-class-ii-iii", 30),
        ("proprioceptive", 37),
        ("respiratory", 26),
    ]
    .into_iter()
    .map(|(name, n)| (name.to_string(), n))
    .collect()
}

impl SurrogateSpec {
    /// 430 / 2304 / 218 neurons and about 65k edges.
    pub fn larva(seed: u64) -> Self {
        SurrogateSpec {
            pool_sizes: [430, 2304, 218],
            edges: 65_000,
            block_fractions: [
                [0.04, 0.10, 0.01],
                [0.03, 0.70, 0.06],
                [0.005, 0.045, 0.01],
            ],
            excitatory: [0.9, 0.7, 0.8],
            degree_sigma: 1.0,
            count_p: 0.4,
            modalities: larva_modalities(),
            seed,
        }
    }

    /// Small random graph with uniform block fractions and no modality tags.
    pub fn small(pool_sizes: [usize; 3], edges: usize, seed: u64) -> Self {
        SurrogateSpec {
            pool_sizes,
            edges,
            block_fractions: [[1.0; 3]; 3],
            excitatory: [0.6; 3],
            degree_sigma: 0.5,
            count_p: 0.5,
            modalities: Vec::new(),
            seed,
        }
    }
}

pub fn generate(spec: &SurrogateSpec) -> Result<SignedConnectome> {
    let n: usize = spec.pool_sizes.iter().sum();
    let tagged: usize = spec.modalities.iter().map(|(_, k)| k).sum();
    if !spec.modalities.is_empty() && tagged != spec.pool_sizes[0] {
        return Err(Error::Validation(format!(
            "modality sizes sum to {tagged}, sensory pool has {}",
            spec.pool_sizes[0]
        )));
    }
    if !(spec.count_p > 0.0 && spec.count_p <= 1.0) {
        return Err(Error::Validation("count_p must be in (0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut pool_of: Vec<Pool> = Pool::ALL
        .iter()
        .zip(spec.pool_sizes)
        .flat_map(|(&p, k)| std::iter::repeat_n(p, k))
        .collect();
    pool_of.shuffle(&mut rng);

    let mut sensory_tags: Vec<Option<String>> = spec
        .modalities
        .iter()
        .flat_map(|(name, k)| std::iter::repeat_n(Some(name.clone()), *k))
        .collect();
    sensory_tags.resize(spec.pool_sizes[0], None);
    sensory_tags.shuffle(&mut rng);
    let mut tags = sensory_tags.into_iter();

    let mut ids: Vec<u64> = (0..n as u64).map(|i| 1_000 + 7 * i).collect();
    ids.shuffle(&mut rng);
    let neurons: Vec<NeuronRecord> = (0..n)
        .map(|i| NeuronRecord {
            id: ids[i],
            pool: pool_of[i],
            modality: if pool_of[i] == Pool::Sensory { tags.next().flatten() } else { None },
        })
        .collect();

    let lognormal = LogNormal::new(0.0, spec.degree_sigma).map_err(|e| Error::Validation(e.to_string()))?;
    let out_prop: Vec<f64> = (0..n).map(|_| lognormal.sample(&mut rng)).collect();
    let in_prop: Vec<f64> = (0..n).map(|_| lognormal.sample(&mut rng)).collect();
    let sign: Vec<f64> = pool_of
        .iter()
        .map(|p| if rng.random_bool(spec.excitatory[p.index()]) { 1.0 } else { -1.0 })
        .collect();

    let members: Vec<Vec<usize>> = Pool::ALL
        .iter()
        .map(|&p| (0..n).filter(|&i| pool_of[i] == p).collect())
        .collect();
    let total_fraction: f64 = spec.block_fractions.iter().flatten().sum();
    let geometric = Geometric::new(spec.count_p).map_err(|e| Error::Validation(e.to_string()))?;

    let mut edges = Vec::with_capacity(spec.edges);
    for g in 0..3 {
        for h in 0..3 {
            let (src, dst) = (&members[g], &members[h]);
            if src.is_empty() || dst.is_empty() {
                continue;
            }
            let capacity = src.len() * dst.len();
            let want = ((spec.block_fractions[g][h] / total_fraction) * spec.edges as f64).round() as usize;
            let want = want.min(capacity);
            let src_w = WeightedIndex::new(src.iter().map(|&i| out_prop[i])).expect("positive weights");
            let dst_w = WeightedIndex::new(dst.iter().map(|&i| in_prop[i])).expect("positive weights");
            let mut seen = HashSet::with_capacity(want);
            let mut attempts = 0usize;
            while seen.len() < want && attempts < 50 * want + 100 {
                attempts += 1;
                let u = src[src_w.sample(&mut rng)];
                let v = dst[dst_w.sample(&mut rng)];
                if seen.insert((u, v)) {
                    let count = 1 + geometric.sample(&mut rng);
                    edges.push(Edge {
                        source: u,
                        target: v,
                        weight: sign[u] * count as f64,
                    });
                }
            }
        }
    }
    SignedConnectome::new(neurons, edges)
}
