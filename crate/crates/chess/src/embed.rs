//! Frozen random feature maps from a board to a 256-dim embedding.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::board::Board;
use crate::encode::{encode_graph, encode_tensor, BoardGraph, EDGE_DIM, NODE_DIM, TENSOR_CHANNELS};

pub const HIDDEN: usize = 128;
pub const EMBED_DIM: usize = 2 * HIDDEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Graph,
    Tensor,
}

impl FromStr for EncoderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "graph" => Ok(EncoderKind::Graph),
            "tensor" => Ok(EncoderKind::Tensor),
            _ => Err(format!("unknown encoder {s:?}, expected graph or tensor")),
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::Graph => "graph",
            EncoderKind::Tensor => "tensor",
        })
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

/// Mean over rows followed by max over rows.
fn mean_max(h: &Array2<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(2 * h.ncols());
    out.slice_mut(s![..h.ncols()]).assign(&h.mean_axis(Axis(0)).expect("nonempty"));
    for (j, col) in h.axis_iter(Axis(1)).enumerate() {
        out[h.ncols() + j] = col.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    }
    out
}

/// Linear node and edge lifts, one message-passing round
/// `h_v + sum_{u -> v} relu(h_u + W_e e_uv)`, then mean and max pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbedder {
    /// `(34, 128)`
    pub node_lift: Array2<f64>,
    /// `(7, 128)`
    pub edge_lift: Array2<f64>,
}

impl GraphEmbedder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GraphEmbedder {
            node_lift: uniform(&mut rng, NODE_DIM, HIDDEN, NODE_DIM),
            edge_lift: uniform(&mut rng, EDGE_DIM, HIDDEN, EDGE_DIM),
        }
    }

    pub fn embed_graph(&self, g: &BoardGraph) -> Array1<f64> {
        let h = g.nodes.dot(&self.node_lift);
        let mut out = h.clone();
        for e in &g.edges {
            let src = h.row(e.source);
            let mut dst = out.row_mut(e.target);
            for j in 0..HIDDEN {
                let mut m = src[j];
                for (k, &a) in e.attr.iter().enumerate() {
                    m += a * self.edge_lift[[k, j]];
                }
                dst[j] += m.max(0.0);
            }
        }
        mean_max(&out)
    }
}

/// A bank of 3x3 zero-padded convolutions with bias, relu, then pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEmbedder {
    /// `(128, 24 * 9)`, input index `channel * 9 + dy * 3 + dx`.
    pub kernels: Array2<f64>,
    pub bias: Array1<f64>,
}

impl TensorEmbedder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = TENSOR_CHANNELS * 9;
        let kernels = uniform(&mut rng, HIDDEN, fan_in, fan_in);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let bias = Array1::from_shape_simple_fn(HIDDEN, || rng.random_range(-bound..bound));
        TensorEmbedder { kernels, bias }
    }

    pub fn embed_tensor(&self, t: &ndarray::Array3<f64>) -> Array1<f64> {
        let mut patches = Array2::zeros((TENSOR_CHANNELS * 9, 64));
        for c in 0..TENSOR_CHANNELS {
            for dy in 0..3 {
                for dx in 0..3 {
                    let row = c * 9 + dy * 3 + dx;
                    for r in 0..8 {
                        for f in 0..8 {
                            let (rr, ff) = (r + dy, f + dx);
                            if (1..=8).contains(&rr) && (1..=8).contains(&ff) {
                                patches[[row, r * 8 + f]] = t[[c, rr - 1, ff - 1]];
                            }
                        }
                    }
                }
            }
        }
        let mut h = self.kernels.dot(&patches);
        for (mut row, &b) in h.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.mapv_inplace(|v| (v + b).max(0.0));
        }
        mean_max(&h.reversed_axes().to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    Graph(GraphEmbedder),
    Tensor(TensorEmbedder),
}

impl Embedder {
    pub fn new(kind: EncoderKind, seed: u64) -> Self {
        match kind {
            EncoderKind::Graph => Embedder::Graph(GraphEmbedder::new(seed)),
            EncoderKind::Tensor => Embedder::Tensor(TensorEmbedder::new(seed)),
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Embedder::Graph(_) => EncoderKind::Graph,
            Embedder::Tensor(_) => EncoderKind::Tensor,
        }
    }

    pub fn embed(&self, b: &Board) -> Array1<f64> {
        match self {
            Embedder::Graph(g) => g.embed_graph(&encode_graph(b)),
            Embedder::Tensor(t) => t.embed_tensor(&encode_tensor(b)),
        }
    }

    /// Embeddings as rows of an `(n, 256)` matrix.
    pub fn embed_all(&self, boards: &[Board]) -> Array2<f64> {
        use rayon::prelude::*;
        let rows: Vec<Array1<f64>> = boards.par_iter().map(|b| self.embed(b)).collect();
        let mut out = Array2::zeros((boards.len(), EMBED_DIM));
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).assign(r);
        }
        out
    }
}
