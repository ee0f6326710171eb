//! Article similarity graph.
//!
//! Edges connect articles whose static feature vectors have cosine similarity
//! at or above a threshold. The stored graph is undirected; message passing
//! reads each node's incoming neighbour list, which neighbourhood sampling may
//! truncate per node.

use alloc::string::ToString;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PanelDataset;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    n_nodes: usize,
    threshold: f64,
    /// Stored once with `src < dst`, ordered by (src, dst).
    edges: Vec<Edge>,
    /// Incoming neighbour sets used for aggregation, each sorted.
    neighbors: Vec<Vec<usize>>,
    /// Degree in the full (unsampled) graph.
    stored_degree: Vec<usize>,
}

impl SimilarityGraph {
    /// Graph from an explicit edge list. Pairs are normalised to `src < dst`;
    /// self-loops and duplicates are rejected.
    pub fn from_edges(n_nodes: usize, threshold: f64, mut edges: Vec<Edge>) -> Result<Self> {
        for e in &mut edges {
            if e.src == e.dst {
                return Err(Error::InvalidArgument(alloc::format!("self-loop on node {}", e.src)));
            }
            if e.src.max(e.dst) >= n_nodes {
                return Err(Error::InvalidArgument(alloc::format!(
                    "edge ({}, {}) references a node beyond {n_nodes}",
                    e.src, e.dst
                )));
            }
            if e.src > e.dst {
                core::mem::swap(&mut e.src, &mut e.dst);
            }
        }
        edges.sort_by_key(|e| (e.src, e.dst));
        if edges.windows(2).any(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst)) {
            return Err(Error::InvalidArgument("duplicate edge".to_string()));
        }
        let mut neighbors = alloc::vec![Vec::new(); n_nodes];
        for e in &edges {
            neighbors[e.src].push(e.dst);
            neighbors[e.dst].push(e.src);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let stored_degree = neighbors.iter().map(Vec::len).collect();
        Ok(Self {
            n_nodes,
            threshold,
            edges,
            neighbors,
            stored_degree,
        })
    }

    /// A graph with no edges.
    pub fn isolated(n_nodes: usize) -> Self {
        Self::from_edges(n_nodes, 1.0, Vec::new()).expect("empty edge list is valid")
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Incoming neighbours of `node` in this view (excludes the node itself).
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    /// Degree in this view.
    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Degree in the stored graph, unaffected by sampling.
    pub fn stored_degree(&self, node: usize) -> usize {
        self.stored_degree[node]
    }

    pub fn max_stored_degree(&self) -> usize {
        self.stored_degree.iter().copied().max().unwrap_or(0)
    }

    /// Same graph with nodes relabelled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                similarity: e.similarity,
            })
            .collect();
        Self::from_edges(self.n_nodes, self.threshold, edges)
    }
}

/// Row norms, rejecting non-finite rows.
pub fn row_norms(features: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("feature width must be at least 1".to_string()));
    }
    features
        .chunks(m)
        .enumerate()
        .map(|(row, x)| {
            if x.iter().all(|v| v.is_finite()) {
                Ok(math::sqrt(math::dot(x, x)))
            } else {
                Err(Error::NonFiniteFeature { row })
            }
        })
        .collect()
}

/// Cosine similarity of two rows; zero-norm rows score 0 against everything.
/// Identical rows score exactly 1.
#[inline]
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = math::dot(a, a);
    let nb = math::dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (math::dot(a, b) / math::sqrt(na * nb)).clamp(-1.0, 1.0)
}

/// Similarities for all pairs `i < j` with `i` in `rows_a` and `j` in `rows_b`,
/// ordered by (i, j). Chunk pairs are independent and may be computed in
/// parallel.
pub fn similarity_block(
    features: &[f64],
    m: usize,
    rows_a: core::ops::Range<usize>,
    rows_b: core::ops::Range<usize>,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for i in rows_a {
        let xi = &features[i * m..(i + 1) * m];
        for j in rows_b.clone().filter(|&j| j > i) {
            out.push((i, j, cosine(xi, &features[j * m..(j + 1) * m])));
        }
    }
    out
}

/// Ordered list of chunk pairs `(a, b)` with `a <= b` covering all row pairs.
pub fn chunk_pairs(n: usize, chunk_size: usize) -> Vec<(core::ops::Range<usize>, core::ops::Range<usize>)> {
    let chunk = chunk_size.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let mut out = Vec::new();
    for (ia, &a) in starts.iter().enumerate() {
        for &b in &starts[ia..] {
            out.push((a..(a + chunk).min(n), b..(b + chunk).min(n)));
        }
    }
    out
}

/// Lazily computed stream of pairwise cosine similarities, one chunk pair at
/// a time. Only the current block is held in memory.
pub struct SimilarityStream<'a> {
    features: &'a [f64],
    m: usize,
    pairs: alloc::vec::IntoIter<(core::ops::Range<usize>, core::ops::Range<usize>)>,
    block: alloc::vec::IntoIter<(usize, usize, f64)>,
}

impl Iterator for SimilarityStream<'_> {
    type Item = (usize, usize, f64);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(x) = self.block.next() {
                return Some(x);
            }
            let (a, b) = self.pairs.next()?;
            self.block = similarity_block(self.features, self.m, a, b).into_iter();
        }
    }
}

/// Cosine similarity for every pair `i < j` of rows of the N × M matrix
/// `features`, computed chunk pair by chunk pair.
pub fn pairwise_similarity(features: &[f64], m: usize, chunk_size: usize) -> Result<SimilarityStream<'_>> {
    row_norms(features, m)?;
    let n = features.len() / m;
    Ok(SimilarityStream {
        features,
        m,
        pairs: chunk_pairs(n, chunk_size).into_iter(),
        block: Vec::new().into_iter(),
    })
}

/// Threshold a similarity stream into a graph: an edge joins `i` and `j` iff
/// their similarity is at least `threshold`.
pub fn build_graph<I>(n_nodes: usize, similarities: I, threshold: f64) -> Result<SimilarityGraph>
where
    I: IntoIterator<Item = (usize, usize, f64)>,
{
    if !(threshold > -1.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "threshold {threshold} outside (-1, 1]"
        )));
    }
    let edges = similarities
        .into_iter()
        .filter(|&(i, j, s)| i != j && s >= threshold)
        .map(|(src, dst, similarity)| Edge { src, dst, similarity })
        .collect();
    SimilarityGraph::from_edges(n_nodes, threshold, edges)
}

/// Per-node random truncation of incoming neighbour sets to at most
/// `max_neighbors`. Nodes at or below the cap keep all neighbours; the stored
/// edge list and stored degrees are unchanged.
pub fn sample_neighborhood(graph: &SimilarityGraph, max_neighbors: usize, seed: u64) -> SimilarityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = graph.clone();
    for list in &mut out.neighbors {
        if list.len() > max_neighbors {
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, list.len(), max_neighbors)
                .into_iter()
                .map(|k| list[k])
                .collect();
            picked.sort_unstable();
            *list = picked;
        }
    }
    out
}

/// Observer of every demand cell read while assembling node features.
pub trait DemandProbe {
    fn read(&mut self, article: usize, week: usize);
}

impl DemandProbe for () {
    #[inline]
    fn read(&mut self, _article: usize, _week: usize) {}
}

impl<F: FnMut(usize, usize)> DemandProbe for F {
    fn read(&mut self, article: usize, week: usize) {
        self(article, week)
    }
}

/// Node features for the `P` steps ending at an anchor week.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureWindow {
    pub anchor: usize,
    pub steps: usize,
    pub n_nodes: usize,
    /// Feature width: demand lags plus the degree channel.
    pub width: usize,
    /// steps × N × width, step-major.
    pub values: Vec<f64>,
    /// steps × N × lag_depth availability of each lag entry.
    pub mask: Vec<bool>,
}

impl NodeFeatureWindow {
    /// N × width slice for step `s` (0 = oldest).
    pub fn step(&self, s: usize) -> &[f64] {
        let len = self.n_nodes * self.width;
        &self.values[s * len..(s + 1) * len]
    }

    pub fn row(&self, s: usize, node: usize) -> &[f64] {
        &self.step(s)[node * self.width..(node + 1) * self.width]
    }
}

/// Node features for steps `anchor+1-P ..= anchor`. The row for node `i` at
/// step `t` is `(y_i[t+1-lag_depth], …, y_i[t], degree_i / max(1, max degree))`;
/// unobserved weeks contribute 0.
pub fn window_node_features(
    graph: &SimilarityGraph,
    data: &PanelDataset,
    anchor: usize,
    steps: usize,
    lag_depth: usize,
) -> Result<NodeFeatureWindow> {
    window_node_features_probed(graph, data, anchor, steps, lag_depth, &mut ())
}

pub fn window_node_features_probed<P: DemandProbe + ?Sized>(
    graph: &SimilarityGraph,
    data: &PanelDataset,
    anchor: usize,
    steps: usize,
    lag_depth: usize,
    probe: &mut P,
) -> Result<NodeFeatureWindow> {
    if steps == 0 || lag_depth == 0 {
        return Err(Error::InvalidArgument("steps and lag depth must be positive".to_string()));
    }
    let earliest = anchor as isize + 2 - steps as isize - lag_depth as isize;
    if anchor >= data.n_weeks() || earliest < 0 {
        return Err(Error::WeekOutOfRange {
            week: anchor,
            needed: earliest,
            len: data.n_weeks(),
        });
    }
    if graph.n_nodes() != data.n_articles() {
        return Err(Error::Shape {
            expected: (data.n_articles(), 0),
            got: (graph.n_nodes(), 0),
        });
    }
    let n = data.n_articles();
    let width = lag_depth + 1;
    let norm = graph.max_stored_degree().max(1) as f64;
    let mut values = Vec::with_capacity(steps * n * width);
    let mut mask = Vec::with_capacity(steps * n * lag_depth);
    for s in 0..steps {
        let t = anchor + 1 - steps + s;
        for i in 0..n {
            for lag in (0..lag_depth).rev() {
                let w = t - lag;
                probe.read(i, w);
                let seen = data.observed(i, w);
                values.push(if seen { data.demand(i, w) } else { 0.0 });
                mask.push(seen);
            }
            values.push(graph.stored_degree(i) as f64 / norm);
        }
    }
    Ok(NodeFeatureWindow {
        anchor,
        steps,
        n_nodes: n,
        width,
        values,
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    pub edge_count: usize,
    pub mean_degree: f64,
    /// Population standard deviation of the degree.
    pub degree_std: f64,
    pub isolated_fraction: f64,
}

pub fn graph_stats(graph: &SimilarityGraph) -> GraphStats {
    let n = graph.n_nodes();
    if n == 0 {
        return GraphStats {
            n_nodes: 0,
            edge_count: 0,
            mean_degree: 0.0,
            degree_std: 0.0,
            isolated_fraction: 0.0,
        };
    }
    let degrees: Vec<f64> = (0..n).map(|i| graph.stored_degree(i) as f64).collect();
    let mean = degrees.iter().sum::<f64>() / n as f64;
    let var = degrees.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    GraphStats {
        n_nodes: n,
        edge_count: graph.edges().len(),
        mean_degree: mean,
        degree_std: math::sqrt(var),
        isolated_fraction: degrees.iter().filter(|&&d| d == 0.0).count() as f64 / n as f64,
    }
}
