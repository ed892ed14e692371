//! Signed connectome: raw synapse counts, neurotransmitter polarity and the
//! sensory / internal / output pool partition.
//!
//! On-disk layout of a connectome directory:
//!
//! ```text
//! nodes.csv     id,pool,modality        pool in {sensory, internal, output}
//! edges.csv     source,target,count[,sign]
//! polarity.csv  id,sign                 sign in {+1, -1}
//! ```
//!
//! The optional `sign` column of `edges.csv` overrides the presynaptic
//! polarity for that edge. It is written for graphs whose signs are not
//! uniform per neuron (expanded graphs).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const NODES_FILE: &str = "nodes.csv";
pub const EDGES_FILE: &str = "edges.csv";
pub const POLARITY_FILE: &str = "polarity.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pool {
    Sensory,
    Internal,
    Output,
}

impl Pool {
    pub const ALL: [Pool; 3] = [Pool::Sensory, Pool::Internal, Pool::Output];

    pub fn index(self) -> usize {
        match self {
            Pool::Sensory => 0,
            Pool::Internal => 1,
            Pool::Output => 2,
        }
    }

    pub fn from_index(i: usize) -> Pool {
        Pool::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pool::Sensory => "sensory",
            Pool::Internal => "internal",
            Pool::Output => "output",
        }
    }
}

impl fmt::Display for Pool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pool {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sensory" | "s" => Ok(Pool::Sensory),
            "internal" | "i" | "r" => Ok(Pool::Internal),
            "output" | "o" => Ok(Pool::Output),
            other => Err(format!("unknown pool `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Excitatory => 1.0,
            Sign::Inhibitory => -1.0,
        }
    }
}

impl FromStr for Sign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "1" | "+1" | "+" => Ok(Sign::Excitatory),
            "-1" | "-" => Ok(Sign::Inhibitory),
            other => Err(format!("sign must be +1 or -1, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronRecord {
    pub id: u64,
    pub pool: Pool,
    pub modality: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Raw axon-to-dendrite synapse counts keyed by neuron id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawAdjacency {
    counts: BTreeMap<(u64, u64), u64>,
    signs: BTreeMap<(u64, u64), Sign>,
}

impl RawAdjacency {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `count` synapses from `source` to `target`; repeated pairs accumulate.
    pub fn add(&mut self, source: u64, target: u64, count: u64) {
        *self.counts.entry((source, target)).or_insert(0) += count;
    }

    pub fn get(&self, source: u64, target: u64) -> u64 {
        self.counts.get(&(source, target)).copied().unwrap_or(0)
    }

    pub fn nnz(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.counts.iter().map(|(&(s, t), &c)| (s, t, c))
    }

    /// Distinct neuron ids appearing as source or target.
    pub fn neuron_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .counts
            .keys()
            .flat_map(|&(s, t)| [s, t])
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Explicit per-edge signs read from an optional `sign` column.
    pub fn explicit_sign(&self, source: u64, target: u64) -> Option<Sign> {
        self.signs.get(&(source, target)).copied()
    }
}

/// Reads `source,target,count[,sign]` rows. A header row is accepted.
pub fn load_edges(path: &Path) -> Result<RawAdjacency> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edges(&text, &path.display().to_string())
}

pub fn parse_edges(text: &str, file: &str) -> Result<RawAdjacency> {
    let mut raw = RawAdjacency::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields.first().is_some_and(|f| f.parse::<i64>().is_err()) {
            continue;
        }
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::parse(file, line_no, format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        let source: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(file, line_no, format!("bad source id `{}`", fields[0])))?;
        let target: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(file, line_no, format!("bad target id `{}`", fields[1])))?;
        let count: i64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(file, line_no, format!("bad synapse count `{}`", fields[2])))?;
        if count < 0 {
            return Err(Error::Validation(format!(
                "{file}:{line_no}: negative synapse count {count}"
            )));
        }
        if count == 0 {
            continue;
        }
        raw.add(source, target, count as u64);
        if fields.len() == 4 && !fields[3].is_empty() {
            let sign: Sign = fields[3].parse().map_err(|e: String| Error::parse(file, line_no, e))?;
            if let Some(prev) = raw.signs.insert((source, target), sign) {
                if prev != sign {
                    return Err(Error::parse(file, line_no, "conflicting signs for repeated edge"));
                }
            }
        }
    }
    Ok(raw)
}

/// Reads `id,pool,modality` rows.
pub fn load_nodes(path: &Path) -> Result<Vec<NeuronRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nodes(&text, &path.display().to_string())
}

pub fn parse_nodes(text: &str, file: &str) -> Result<Vec<NeuronRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if lineno == 0 && fields[0].parse::<u64>().is_err() {
            continue;
        }
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(file, line_no, format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(file, line_no, format!("bad neuron id `{}`", fields[0])))?;
        let pool: Pool = fields[1].parse().map_err(|e: String| Error::parse(file, line_no, e))?;
        let modality = fields
            .get(2)
            .filter(|m| !m.is_empty())
            .map(|m| m.to_string());
        out.push(NeuronRecord { id, pool, modality });
    }
    Ok(out)
}

pub type PolarityMap = HashMap<u64, Sign>;

/// Reads `id,sign` rows.
pub fn load_polarity(path: &Path) -> Result<PolarityMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = PolarityMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if lineno == 0 && fields[0].parse::<u64>().is_err() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(&file, line_no, format!("expected 2 fields, found {}", fields.len())));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(&file, line_no, format!("bad neuron id `{}`", fields[0])))?;
        let sign: Sign = fields[1].parse().map_err(|e: String| Error::parse(&file, line_no, e))?;
        out.insert(id, sign);
    }
    Ok(out)
}

/// Reads an `id,modality` map for sensory neurons. Lines starting with `#`
/// are comments; a header row is accepted.
pub fn load_modality_map(path: &Path) -> Result<HashMap<u64, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_modality_map(&text, &path.display().to_string())
}

pub fn parse_modality_map(text: &str, file: &str) -> Result<HashMap<u64, String>> {
    let mut out = HashMap::new();
    let mut first = true;
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if std::mem::take(&mut first) && fields[0].parse::<u64>().is_err() {
            continue;
        }
        if fields.len() != 2 || fields[1].is_empty() {
            return Err(Error::parse(file, line_no, "expected `id,modality`"));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(file, line_no, format!("bad neuron id `{}`", fields[0])))?;
        if out.insert(id, fields[1].to_string()).is_some() {
            return Err(Error::parse(file, line_no, format!("neuron {id} listed twice")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarityOptions {
    /// Sign given to presynaptic neurons absent from the polarity map.
    pub default_sign: Sign,
}

impl Default for PolarityOptions {
    fn default() -> Self {
        PolarityOptions {
            default_sign: Sign::Excitatory,
        }
    }
}

/// Signs raw counts by presynaptic polarity: `w(i, j) = polarity(i) * count(i, j)`.
pub fn apply_polarity(
    raw: &RawAdjacency,
    neurons: Vec<NeuronRecord>,
    polarity: &PolarityMap,
    options: PolarityOptions,
) -> Result<SignedConnectome> {
    let index: HashMap<u64, usize> = neurons.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut missing: Vec<u64> = Vec::new();
    let mut edges = Vec::with_capacity(raw.nnz());
    for (s, t, count) in raw.iter() {
        let source = *index
            .get(&s)
            .ok_or_else(|| Error::Validation(format!("edge source {s} has no node record")))?;
        let target = *index
            .get(&t)
            .ok_or_else(|| Error::Validation(format!("edge target {t} has no node record")))?;
        let sign = match raw.explicit_sign(s, t) {
            Some(sign) => sign,
            None => match polarity.get(&s) {
                Some(&sign) => sign,
                None => {
                    missing.push(s);
                    options.default_sign
                }
            },
        };
        edges.push(Edge {
            source,
            target,
            weight: sign.factor() * count as f64,
        });
    }
    missing.sort_unstable();
    missing.dedup();
    if !missing.is_empty() {
        warn!(
            "{} presynaptic neurons lack a polarity annotation; using {:?} (first: {})",
            missing.len(),
            options.default_sign,
            missing[0]
        );
    }
    SignedConnectome::new(neurons, edges)
}

/// A signed, pool-partitioned connectome. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedConnectome {
    neurons: Vec<NeuronRecord>,
    pools: [Vec<usize>; 3],
    local: Vec<usize>,
    edges: Vec<Edge>,
    scale: f64,
}

impl SignedConnectome {
    /// Validates node records and drops zero-weight edges. Edges are kept
    /// sorted by `(source, target)`; duplicate pairs are summed.
    pub fn new(neurons: Vec<NeuronRecord>, edges: Vec<Edge>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(neurons.len());
        for n in &neurons {
            if !seen.insert(n.id) {
                return Err(Error::Validation(format!("duplicate neuron id {}", n.id)));
            }
            if n.modality.is_some() && n.pool != Pool::Sensory {
                return Err(Error::Validation(format!(
                    "neuron {} carries a modality tag but is not sensory",
                    n.id
                )));
            }
        }
        let n = neurons.len();
        let mut edges = edges;
        for e in &edges {
            if e.source >= n || e.target >= n {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) references a neuron outside 0..{n}",
                    e.source, e.target
                )));
            }
            if !e.weight.is_finite() {
                return Err(Error::Validation(format!(
                    "edge ({}, {}) has non-finite weight",
                    e.source, e.target
                )));
            }
        }
        edges.sort_by_key(|e| (e.source, e.target));
        let mut merged: Vec<Edge> = Vec::with_capacity(edges.len());
        for e in edges {
            match merged.last_mut() {
                Some(last) if (last.source, last.target) == (e.source, e.target) => last.weight += e.weight,
                _ => merged.push(e),
            }
        }
        merged.retain(|e| e.weight != 0.0);
        let edges = merged;

        let mut pools: [Vec<usize>; 3] = Default::default();
        let mut local = vec![0; n];
        for (i, neuron) in neurons.iter().enumerate() {
            let p = neuron.pool.index();
            local[i] = pools[p].len();
            pools[p].push(i);
        }
        Ok(SignedConnectome {
            neurons,
            pools,
            local,
            edges,
            scale: 1.0,
        })
    }

    /// Loads `nodes.csv`, `edges.csv` and (optionally) `polarity.csv` from `dir`.
    pub fn load_dir(dir: &Path, options: PolarityOptions) -> Result<Self> {
        let neurons = load_nodes(&dir.join(NODES_FILE))?;
        let raw = load_edges(&dir.join(EDGES_FILE))?;
        let polarity_path = dir.join(POLARITY_FILE);
        let polarity = if polarity_path.exists() {
            load_polarity(&polarity_path)?
        } else {
            warn!("{} not found; all neurons use the default sign", polarity_path.display());
            PolarityMap::new()
        };
        apply_polarity(&raw, neurons, &polarity, options)
    }

    /// Writes the three CSV files. Magnitudes are written as synapse counts,
    /// undoing any normalization scale; signs go to the per-edge column.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut nodes = String::from("id,pool,modality\n");
        for n in &self.neurons {
            nodes.push_str(&format!(
                "{},{},{}\n",
                n.id,
                n.pool,
                n.modality.as_deref().unwrap_or("")
            ));
        }
        let mut edges = String::from("source,target,count,sign\n");
        for e in &self.edges {
            let count = (e.weight.abs() / self.scale).round() as u64;
            let sign = if e.weight > 0.0 { "+1" } else { "-1" };
            edges.push_str(&format!(
                "{},{},{},{}\n",
                self.neurons[e.source].id, self.neurons[e.target].id, count, sign
            ));
        }
        let mut polarity = String::from("id,sign\n");
        for (i, n) in self.neurons.iter().enumerate() {
            if let Some(sign) = self.presynaptic_sign(i) {
                polarity.push_str(&format!("{},{}\n", n.id, if sign == Sign::Excitatory { "+1" } else { "-1" }));
            }
        }
        for (name, body) in [(NODES_FILE, nodes), (EDGES_FILE, edges), (POLARITY_FILE, polarity)] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.neurons.len()
    }

    pub fn neurons(&self) -> &[NeuronRecord] {
        &self.neurons
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Neuron indices belonging to `pool`, ascending.
    pub fn pool(&self, pool: Pool) -> &[usize] {
        &self.pools[pool.index()]
    }

    pub fn pool_size(&self, pool: Pool) -> usize {
        self.pools[pool.index()].len()
    }

    pub fn pool_sizes(&self) -> [usize; 3] {
        [self.pools[0].len(), self.pools[1].len(), self.pools[2].len()]
    }

    /// Position of neuron `index` within its pool.
    pub fn local_index(&self, index: usize) -> usize {
        self.local[index]
    }

    pub fn pool_of(&self, index: usize) -> Pool {
        self.neurons[index].pool
    }

    /// Cumulative normalization factor applied to the raw signed counts.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Common sign of a neuron's outgoing weights, or `None` if it has no
    /// outgoing edges or mixed signs.
    pub fn presynaptic_sign(&self, index: usize) -> Option<Sign> {
        let mut sign = None;
        for e in self.outgoing(index) {
            let s = if e.weight > 0.0 { Sign::Excitatory } else { Sign::Inhibitory };
            match sign {
                None => sign = Some(s),
                Some(prev) if prev != s => return None,
                _ => {}
            }
        }
        sign
    }

    /// Outgoing edges of neuron `index` (edges are sorted by source).
    pub fn outgoing(&self, index: usize) -> &[Edge] {
        let start = self.edges.partition_point(|e| e.source < index);
        let end = self.edges.partition_point(|e| e.source <= index);
        &self.edges[start..end]
    }

    /// Block `W_{from -> to}` as a `(|to| x |from|)` matrix acting on the
    /// source pool's activity vector.
    pub fn block(&self, from: Pool, to: Pool) -> CsrMatrix {
        let triplets: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .filter(|e| self.pool_of(e.source) == from && self.pool_of(e.target) == to)
            .map(|e| (self.local[e.target], self.local[e.source], e.weight))
            .collect();
        CsrMatrix::from_triplets(self.pool_size(to), self.pool_size(from), &triplets)
    }

    /// Whole matrix in neuron-index order, rows = targets, columns = sources.
    pub fn matrix(&self) -> CsrMatrix {
        let triplets: Vec<(usize, usize, f64)> =
            self.edges.iter().map(|e| (e.target, e.source, e.weight)).collect();
        CsrMatrix::from_triplets(self.n(), self.n(), &triplets)
    }

    /// Copy with every weight multiplied by `factor` (must be positive).
    pub fn scaled(&self, factor: f64) -> SignedConnectome {
        assert!(factor > 0.0 && factor.is_finite(), "scale factor must be positive");
        let mut out = self.clone();
        for e in &mut out.edges {
            e.weight *= factor;
        }
        out.scale *= factor;
        out
    }

    pub(crate) fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// SHA-256 over the neuron list and the exact bit pattern of every edge.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.neurons {
            h.update(n.id.to_le_bytes());
            h.update([n.pool.index() as u8]);
        }
        for e in &self.edges {
            h.update((e.source as u64).to_le_bytes());
            h.update((e.target as u64).to_le_bytes());
            h.update(e.weight.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Copy with the given neuron indices removed (their edges go too).
    pub fn without_neurons(&self, remove: &HashSet<usize>) -> Result<SignedConnectome> {
        let mut remap = vec![usize::MAX; self.n()];
        let mut neurons = Vec::with_capacity(self.n() - remove.len());
        for (i, n) in self.neurons.iter().enumerate() {
            if !remove.contains(&i) {
                remap[i] = neurons.len();
                neurons.push(n.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| remap[e.source] != usize::MAX && remap[e.target] != usize::MAX)
            .map(|e| Edge {
                source: remap[e.source],
                target: remap[e.target],
                weight: e.weight,
            })
            .collect();
        let mut out = SignedConnectome::new(neurons, edges)?;
        out.scale = self.scale;
        Ok(out)
    }

    /// Replaces modality tags from an `id,modality` map. Ids not in the map
    /// keep their tag.
    pub fn with_modalities(&self, map: &HashMap<u64, String>) -> Result<SignedConnectome> {
        let mut out = self.clone();
        for n in &mut out.neurons {
            if let Some(m) = map.get(&n.id) {
                if n.pool != Pool::Sensory {
                    return Err(Error::Validation(format!(
                        "modality map tags non-sensory neuron {}",
                        n.id
                    )));
                }
                n.modality = Some(m.clone());
            }
        }
        Ok(out)
    }

    pub fn summary(&self) -> ConnectomeSummary {
        let mut pairs = Vec::new();
        for from in Pool::ALL {
            for to in Pool::ALL {
                let (mut pos, mut total) = (0usize, 0usize);
                for e in &self.edges {
                    if self.pool_of(e.source) == from && self.pool_of(e.target) == to {
                        total += 1;
                        if e.weight > 0.0 {
                            pos += 1;
                        }
                    }
                }
                pairs.push(PoolPairStats {
                    from,
                    to,
                    edges: total,
                    positive_fraction: if total == 0 { None } else { Some(pos as f64 / total as f64) },
                });
            }
        }
        ConnectomeSummary {
            n: self.n(),
            pool_sizes: self.pool_sizes(),
            edges: self.edge_count(),
            pairs,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolPairStats {
    pub from: Pool,
    pub to: Pool,
    pub edges: usize,
    pub positive_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectomeSummary {
    pub n: usize,
    pub pool_sizes: [usize; 3],
    pub edges: usize,
    pub pairs: Vec<PoolPairStats>,
}

impl fmt::Display for ConnectomeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "neurons: {}", self.n)?;
        writeln!(
            f,
            "pools: sensory={} internal={} output={}",
            self.pool_sizes[0], self.pool_sizes[1], self.pool_sizes[2]
        )?;
        writeln!(f, "edges: {}", self.edges)?;
        writeln!(f, "from,to,edges,positive_fraction")?;
        for p in &self.pairs {
            match p.positive_fraction {
                Some(frac) => writeln!(f, "{},{},{},{:.4}", p.from, p.to, p.edges, frac)?,
                None => writeln!(f, "{},{},{},", p.from, p.to, p.edges)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormScheme {
    None,
    AbsMax,
    /// Target spectral radius.
    Spectral(f64),
}

impl Default for NormScheme {
    fn default() -> Self {
        NormScheme::AbsMax
    }
}

impl FromStr for NormScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        match s {
            "none" => Ok(NormScheme::None),
            "abs-max" | "absmax" => Ok(NormScheme::AbsMax),
            _ => {
                let inner = s
                    .strip_prefix("spectral(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| s.strip_prefix("spectral:"))
                    .ok_or_else(|| format!("unknown normalization `{s}`"))?;
                let rho: f64 = inner.parse().map_err(|_| format!("bad spectral radius `{inner}`"))?;
                Ok(NormScheme::Spectral(rho))
            }
        }
    }
}

impl fmt::Display for NormScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormScheme::None => f.write_str("none"),
            NormScheme::AbsMax => f.write_str("abs-max"),
            NormScheme::Spectral(rho) => write!(f, "spectral({rho})"),
        }
    }
}

/// What `normalize` actually did.
#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub requested: NormScheme,
    pub applied: NormScheme,
    pub factor: f64,
    pub estimated_radius: Option<f64>,
}

/// Multiplies all weights by one positive scalar chosen by `scheme`.
pub fn normalize(c: &SignedConnectome, scheme: NormScheme) -> Result<(SignedConnectome, NormReport)> {
    let abs_max = |c: &SignedConnectome| c.edges.iter().fold(0.0f64, |m, e| m.max(e.weight.abs()));
    match scheme {
        NormScheme::None => Ok((
            c.clone(),
            NormReport {
                requested: scheme,
                applied: scheme,
                factor: 1.0,
                estimated_radius: None,
            },
        )),
        NormScheme::AbsMax => {
            let m = abs_max(c);
            let factor = if m > 0.0 { 1.0 / m } else { 1.0 };
            Ok((
                c.scaled(factor),
                NormReport {
                    requested: scheme,
                    applied: scheme,
                    factor,
                    estimated_radius: None,
                },
            ))
        }
        NormScheme::Spectral(rho) => {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Validation(format!("spectral radius target must be > 0, got {rho}")));
            }
            match spectral_radius(&c.matrix(), 1e-10, 20_000) {
                Some(radius) if radius > 0.0 => {
                    let factor = rho / radius;
                    Ok((
                        c.scaled(factor),
                        NormReport {
                            requested: scheme,
                            applied: scheme,
                            factor,
                            estimated_radius: Some(radius),
                        },
                    ))
                }
                _ => {
                    warn!("spectral radius estimate did not converge; falling back to abs-max");
                    let (out, mut report) = normalize(c, NormScheme::AbsMax)?;
                    report.requested = scheme;
                    Ok((out, report))
                }
            }
        }
    }
}

/// Power-iteration estimate of the spectral radius of a square matrix.
///
/// Each iteration fits the two-term recurrence `A^2 x = a A x - b x` on the
/// current iterate, so a dominant complex-conjugate or `±rho` pair converges
/// as fast as a single real eigenvalue. Returns `None` when the iteration
/// collapses to zero (nilpotent part) or fails to settle within `max_iter`.
pub fn spectral_radius(m: &CsrMatrix, tol: f64, max_iter: usize) -> Option<f64> {
    assert_eq!(m.rows(), m.cols(), "spectral radius needs a square matrix");
    let n = m.rows();
    if n == 0 || m.is_empty() {
        return None;
    }
    let mut x: Array1<f64> = Array1::from_shape_fn(n, |i| 1.0 + 0.5 * ((i as f64 * 0.618_033_988_7).fract() - 0.5));
    let norm = x.dot(&x).sqrt();
    x /= norm;

    let apply = |v: &Array1<f64>| {
        let mut out = Array1::zeros(n);
        m.mul_vec_acc(v.view(), out.view_mut());
        out
    };

    let mut previous: Option<f64> = None;
    let mut stable = 0;
    for _ in 0..max_iter {
        let y = apply(&x);
        let y_norm = y.dot(&y).sqrt();
        if !(y_norm > 1e-300) || !y_norm.is_finite() {
            return None;
        }
        let z = apply(&y);

        // Least squares for z ≈ a*y - b*x.
        let (yy, xx, xy) = (y.dot(&y), x.dot(&x), x.dot(&y));
        let (zy, zx) = (z.dot(&y), z.dot(&x));
        let det = yy * xx - xy * xy;
        let estimate = if det > 1e-12 * yy * xx {
            let a = (zy * xx - zx * xy) / det;
            let b = -(yy * zx - xy * zy) / det;
            let disc = a * a - 4.0 * b;
            if disc >= 0.0 {
                let s = disc.sqrt();
                ((a + s) / 2.0).abs().max(((a - s) / 2.0).abs())
            } else {
                b.sqrt()
            }
        } else {
            (xy / xx).abs()
        };

        if let Some(prev) = previous {
            if (estimate - prev).abs() <= tol * estimate.max(1e-300) {
                stable += 1;
                if stable >= 3 {
                    return Some(estimate);
                }
            } else {
                stable = 0;
            }
        }
        previous = Some(estimate);

        x = y / y_norm;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neuron(id: u64, pool: Pool) -> NeuronRecord {
        NeuronRecord { id, pool, modality: None }
    }

    #[test]
    fn duplicate_rows_are_summed() {
        let raw = parse_edges("1,2,3\n1,2,2\n", "t").unwrap();
        assert_eq!(raw.nnz(), 1);
        assert_eq!(raw.get(1, 2), 5);
    }

    #[test]
    fn empty_file_gives_empty_matrix() {
        let raw = parse_edges("", "t").unwrap();
        assert!(raw.is_empty());
        assert!(raw.neuron_ids().is_empty());
    }

    #[test]
    fn header_is_skipped_and_malformed_rows_report_line() {
        let raw = parse_edges("source,target,count\n4,5,1\n", "t").unwrap();
        assert_eq!(raw.get(4, 5), 1);
        match parse_edges("1,2,3\n1,x,3\n", "edges.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_edges("1,2\n", "edges.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn negative_count_is_validation_error() {
        assert!(matches!(parse_edges("1,2,-3\n", "t"), Err(Error::Validation(_))));
    }

    #[test]
    fn polarity_multiplies_counts() {
        let mut raw = RawAdjacency::new();
        raw.add(1, 2, 4);
        raw.add(1, 3, 2);
        raw.add(2, 3, 1);
        let nodes = vec![neuron(1, Pool::Sensory), neuron(2, Pool::Internal), neuron(3, Pool::Output)];
        let polarity: PolarityMap = [(1, Sign::Inhibitory), (2, Sign::Excitatory)].into_iter().collect();
        let c = apply_polarity(&raw, nodes, &polarity, PolarityOptions::default()).unwrap();
        let weights: Vec<f64> = c.edges().iter().map(|e| e.weight).collect();
        assert_eq!(weights, vec![-4.0, -2.0, 1.0]);
        assert_eq!(c.presynaptic_sign(0), Some(Sign::Inhibitory));
    }

    #[test]
    fn all_positive_polarity_is_identity() {
        let mut raw = RawAdjacency::new();
        raw.add(1, 2, 7);
        raw.add(2, 1, 3);
        let nodes = vec![neuron(1, Pool::Sensory), neuron(2, Pool::Output)];
        let polarity: PolarityMap = [(1, Sign::Excitatory), (2, Sign::Excitatory)].into_iter().collect();
        let c = apply_polarity(&raw, nodes, &polarity, PolarityOptions::default()).unwrap();
        for e in c.edges() {
            let id = |i: usize| c.neurons()[i].id;
            assert_eq!(e.weight, raw.get(id(e.source), id(e.target)) as f64);
        }
    }

    #[test]
    fn missing_polarity_uses_configured_default() {
        let mut raw = RawAdjacency::new();
        raw.add(1, 2, 3);
        let nodes = vec![neuron(1, Pool::Sensory), neuron(2, Pool::Internal)];
        let opts = PolarityOptions { default_sign: Sign::Inhibitory };
        let c = apply_polarity(&raw, nodes, &PolarityMap::new(), opts).unwrap();
        assert_eq!(c.edges()[0].weight, -3.0);
    }

    #[test]
    fn node_invariants_are_enforced() {
        let dup = vec![neuron(1, Pool::Sensory), neuron(1, Pool::Output)];
        assert!(SignedConnectome::new(dup, vec![]).is_err());
        let tagged = vec![NeuronRecord {
            id: 1,
            pool: Pool::Internal,
            modality: Some("sight".into()),
        }];
        assert!(SignedConnectome::new(tagged, vec![]).is_err());
    }

    #[test]
    fn self_loops_are_kept() {
        let nodes = vec![neuron(1, Pool::Internal)];
        let c = SignedConnectome::new(nodes, vec![Edge { source: 0, target: 0, weight: 2.0 }]).unwrap();
        assert_eq!(c.edge_count(), 1);
        assert_eq!(c.block(Pool::Internal, Pool::Internal).nnz(), 1);
    }

    #[test]
    fn empty_block_when_pool_pair_unconnected() {
        let nodes = vec![neuron(1, Pool::Sensory), neuron(2, Pool::Sensory), neuron(3, Pool::Internal)];
        let edges = vec![Edge { source: 0, target: 2, weight: 1.0 }];
        let c = SignedConnectome::new(nodes, edges).unwrap();
        assert!(c.block(Pool::Sensory, Pool::Sensory).is_empty());
        assert_eq!(c.block(Pool::Sensory, Pool::Internal).nnz(), 1);
    }

    #[test]
    fn normalization_schemes() {
        let nodes = vec![neuron(1, Pool::Sensory), neuron(2, Pool::Internal)];
        let edges = vec![
            Edge { source: 0, target: 1, weight: -4.0 },
            Edge { source: 1, target: 0, weight: 2.0 },
        ];
        let c = SignedConnectome::new(nodes, edges).unwrap();
        let (same, _) = normalize(&c, NormScheme::None).unwrap();
        assert_eq!(same, c);
        let (abs, report) = normalize(&c, NormScheme::AbsMax).unwrap();
        assert_eq!(abs.edges().iter().map(|e| e.weight).collect::<Vec<_>>(), vec![-1.0, 0.5]);
        assert_eq!(report.factor, 0.25);
        assert!(normalize(&c, NormScheme::Spectral(0.0)).is_err());
    }

    #[test]
    fn spectral_falls_back_on_nilpotent_graph() {
        // A DAG has spectral radius zero; the spectral scheme cannot apply.
        let nodes = vec![neuron(1, Pool::Sensory), neuron(2, Pool::Internal), neuron(3, Pool::Output)];
        let edges = vec![
            Edge { source: 0, target: 1, weight: 2.0 },
            Edge { source: 1, target: 2, weight: -4.0 },
        ];
        let c = SignedConnectome::new(nodes, edges).unwrap();
        let (out, report) = normalize(&c, NormScheme::Spectral(0.9)).unwrap();
        assert_eq!(report.applied, NormScheme::AbsMax);
        assert_eq!(out.edges()[1].weight, -1.0);
    }

    #[test]
    fn spectral_radius_of_rotation_and_swap() {
        // Rotation-scaling block: eigenvalues 0.6 ± 0.8i scaled by 2 -> radius 2.
        let rot = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.2), (0, 1, -1.6), (1, 0, 1.6), (1, 1, 1.2)]);
        let r = spectral_radius(&rot, 1e-12, 1000).unwrap();
        assert!((r - 2.0).abs() < 1e-9, "{r}");
        // Permutation with eigenvalues ±3.
        let swap = CsrMatrix::from_triplets(2, 2, &[(0, 1, 3.0), (1, 0, 3.0)]);
        let r = spectral_radius(&swap, 1e-12, 1000).unwrap();
        assert!((r - 3.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn norm_scheme_parsing() {
        assert_eq!("spectral(0.95)".parse::<NormScheme>().unwrap(), NormScheme::Spectral(0.95));
        assert_eq!("abs-max".parse::<NormScheme>().unwrap(), NormScheme::AbsMax);
        assert!("bogus".parse::<NormScheme>().is_err());
    }

    #[test]
    fn modality_map_with_comments_and_header() {
        let m = parse_modality_map("# tags\nid,modality\n3,sight\n4, olfactory\n", "t").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[&4], "olfactory");
        assert!(parse_modality_map("3,sight\n3,sight\n", "t").is_err());
        assert!(parse_modality_map("3\n", "t").is_err());
    }
}
