//! Graph encoder: a stack of mean-aggregation graph convolutions.
//!
//! Each layer computes, for every node `i`,
//!
//! ```text
//! h'_i = LeakyReLU( mean_{j ∈ N(i) ∪ {i}} (h_j W [+ b]) )
//! ```
//!
//! followed by dropout while training. The same weights are applied to every
//! step of a context window, so the parameter count does not depend on the
//! window length or the number of nodes.

use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::graph::{NodeFeatureWindow, SimilarityGraph};
use crate::math;
use crate::params::{fill_uniform, outer_acc, ParamLayout, Pass};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_width: usize,
    pub layer_sizes: Vec<usize>,
    pub negative_slope: f64,
    pub dropout: f64,
    pub bias: bool,
}

impl EncoderConfig {
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            layer_sizes: alloc::vec![16, 8],
            negative_slope: 0.01,
            dropout: 0.2,
            bias: false,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layer_sizes.last().copied().unwrap_or(self.input_width)
    }

    fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) || self.input_width == 0 {
            return Err(Error::Config("encoder layer sizes must be positive and non-empty".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(alloc::format!("encoder dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::default();
        let mut fin = self.input_width;
        for (k, &fout) in self.layer_sizes.iter().enumerate() {
            layout.push(alloc::format!("encoder.layer{k}.weight"), fin, fout);
            if self.bias {
                layout.push(alloc::format!("encoder.layer{k}.bias"), 1, fout);
            }
            fin = fout;
        }
        layout
    }
}

/// Encoder configuration plus its flat weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl EncoderParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: EncoderConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut values = alloc::vec![0.0; layout.len()];
        for b in &layout.blocks {
            if b.name.ends_with("weight") {
                let bound = math::sqrt(6.0 / (b.rows + b.cols) as f64);
                fill_uniform(&mut values[b.range()], bound, rng);
            }
        }
        Ok(Self { config, layout, values })
    }

    pub fn from_values(config: EncoderConfig, values: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if values.len() != layout.len() {
            return Err(Error::Shape {
                expected: (layout.len(), 1),
                got: (values.len(), 1),
            });
        }
        Ok(Self { config, layout, values })
    }

    pub fn n_layers(&self) -> usize {
        self.config.layer_sizes.len()
    }

    fn block_index(&self, layer: usize) -> usize {
        layer * if self.config.bias { 2 } else { 1 }
    }

    /// (weight, bias, f_in, f_out) of a layer.
    fn layer(&self, k: usize) -> (&[f64], Option<&[f64]>, usize, usize) {
        let wb = self.layout.block(self.block_index(k));
        let bias = self
            .config
            .bias
            .then(|| &self.values[self.layout.block(self.block_index(k) + 1).range()]);
        (&self.values[wb.range()], bias, wb.rows, wb.cols)
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }
}

/// Z = H W (+ b) for N × f_in H and f_in × f_out W.
fn transform(h: &[f64], n: usize, fin: usize, w: &[f64], fout: usize, bias: Option<&[f64]>) -> Vec<f64> {
    let mut z = alloc::vec![0.0; n * fout];
    for i in 0..n {
        let zi = &mut z[i * fout..(i + 1) * fout];
        if let Some(b) = bias {
            zi.copy_from_slice(b);
        }
        for (c, &hc) in h[i * fin..(i + 1) * fin].iter().enumerate() {
            if hc == 0.0 {
                continue;
            }
            for (zo, wv) in zi.iter_mut().zip(&w[c * fout..(c + 1) * fout]) {
                *zo += hc * wv;
            }
        }
    }
    z
}

/// Mean over each node's incoming neighbours plus itself.
fn aggregate(z: &[f64], graph: &SimilarityGraph, fout: usize) -> Vec<f64> {
    let n = graph.n_nodes();
    let mut a = alloc::vec![0.0; n * fout];
    for i in 0..n {
        let ai = &mut a[i * fout..(i + 1) * fout];
        ai.copy_from_slice(&z[i * fout..(i + 1) * fout]);
        for &j in graph.neighbors(i) {
            for (x, zj) in ai.iter_mut().zip(&z[j * fout..(j + 1) * fout]) {
                *x += zj;
            }
        }
        let inv = 1.0 / (1 + graph.degree(i)) as f64;
        for x in ai.iter_mut() {
            *x *= inv;
        }
    }
    a
}

/// One graph convolution over N × f_in node features with an f_in × f_out
/// weight matrix (row-major). Self-loops are always included.
pub fn gnn_layer(
    node_features: &[f64],
    f_in: usize,
    graph: &SimilarityGraph,
    weight: &[f64],
    f_out: usize,
    slope: f64,
) -> Result<Vec<f64>> {
    let n = graph.n_nodes();
    if node_features.len() != n * f_in {
        return Err(Error::Shape {
            expected: (n, f_in),
            got: (node_features.len() / f_in.max(1), f_in),
        });
    }
    if weight.len() != f_in * f_out {
        return Err(Error::Shape {
            expected: (f_in, f_out),
            got: (weight.len() / f_out.max(1), f_out),
        });
    }
    let z = transform(node_features, n, f_in, weight, f_out, None);
    Ok(aggregate(&z, graph, f_out).into_iter().map(|v| math::leaky_relu(v, slope)).collect())
}

/// Embeddings of every node at each step of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEmbeddings {
    pub anchor: usize,
    pub steps: usize,
    pub n_nodes: usize,
    pub dim: usize,
    /// steps × N × dim, step-major.
    pub values: Vec<f64>,
}

impl WindowEmbeddings {
    /// Embedding of `node` at step `s` (0 = oldest).
    pub fn column(&self, node: usize, s: usize) -> &[f64] {
        let off = (s * self.n_nodes + node) * self.dim;
        &self.values[off..off + self.dim]
    }

    pub fn sequence(&self, node: usize) -> EmbeddingSequence {
        EmbeddingSequence {
            anchor: self.anchor,
            dim: self.dim,
            columns: (0..self.steps).flat_map(|s| self.column(node, s).iter().copied()).collect(),
        }
    }
}

/// Per-article embedding columns ordered oldest to newest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSequence {
    pub anchor: usize,
    pub dim: usize,
    /// steps × dim.
    pub columns: Vec<f64>,
}

impl EmbeddingSequence {
    pub fn steps(&self) -> usize {
        self.columns.len() / self.dim.max(1)
    }

    pub fn column(&self, s: usize) -> &[f64] {
        &self.columns[s * self.dim..(s + 1) * self.dim]
    }
}

struct LayerCache {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    dropout: Option<Vec<f64>>,
}

/// Activations kept for the backward pass.
pub struct EncoderCache {
    steps: Vec<Vec<LayerCache>>,
    graph: SimilarityGraph,
}

/// Run the layer stack on every step slice of `features` with shared weights.
pub fn encode_window(
    features: &NodeFeatureWindow,
    graph: &SimilarityGraph,
    params: &EncoderParams,
    pass: &mut Pass<'_>,
) -> Result<(WindowEmbeddings, EncoderCache)> {
    if features.width != params.config.input_width {
        return Err(Error::Shape {
            expected: (features.n_nodes, params.config.input_width),
            got: (features.n_nodes, features.width),
        });
    }
    if graph.n_nodes() != features.n_nodes {
        return Err(Error::Shape {
            expected: (features.n_nodes, features.width),
            got: (graph.n_nodes(), features.width),
        });
    }
    let n = features.n_nodes;
    let dim = params.config.output_dim();
    let mut values = Vec::with_capacity(features.steps * n * dim);
    let mut caches = Vec::with_capacity(features.steps);
    for s in 0..features.steps {
        let mut h = features.step(s).to_vec();
        let mut layers = Vec::with_capacity(params.n_layers());
        for k in 0..params.n_layers() {
            let (w, b, fin, fout) = params.layer(k);
            let z = transform(&h, n, fin, w, fout, b);
            let a = aggregate(&z, graph, fout);
            let mut out: Vec<f64> = a.iter().map(|&v| math::leaky_relu(v, params.config.negative_slope)).collect();
            let dropout = pass.dropout_mask(out.len(), params.config.dropout);
            if let Some(mask) = &dropout {
                for (o, m) in out.iter_mut().zip(mask) {
                    *o *= m;
                }
            }
            layers.push(LayerCache {
                input: core::mem::replace(&mut h, out),
                pre_activation: a,
                dropout,
            });
        }
        values.extend_from_slice(&h);
        caches.push(layers);
    }
    Ok((
        WindowEmbeddings {
            anchor: features.anchor,
            steps: features.steps,
            n_nodes: n,
            dim,
            values,
        },
        EncoderCache {
            steps: caches,
            graph: graph.clone(),
        },
    ))
}

/// Accumulate parameter gradients into `grads` (same layout as
/// `params.values`) given the gradient of a loss with respect to every
/// embedding entry (steps × N × dim, the layout of [`WindowEmbeddings`]).
pub fn encoder_backward(params: &EncoderParams, cache: &EncoderCache, d_embeddings: &[f64], grads: &mut [f64]) {
    let graph = &cache.graph;
    let n = graph.n_nodes();
    let dim = params.config.output_dim();
    let slope = params.config.negative_slope;
    for (s, layers) in cache.steps.iter().enumerate() {
        let mut d_out = d_embeddings[s * n * dim..(s + 1) * n * dim].to_vec();
        if d_out.iter().all(|&v| v == 0.0) {
            continue;
        }
        for k in (0..layers.len()).rev() {
            let lc = &layers[k];
            let (w, _, fin, fout) = params.layer(k);
            // through dropout and the activation
            let mut d_agg = d_out;
            if let Some(mask) = &lc.dropout {
                for (d, m) in d_agg.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            for (d, &a) in d_agg.iter_mut().zip(&lc.pre_activation) {
                if a < 0.0 {
                    *d *= slope;
                }
            }
            // through the mean: node i spreads its gradient over N(i) ∪ {i}
            let mut d_z = alloc::vec![0.0; n * fout];
            for i in 0..n {
                let inv = 1.0 / (1 + graph.degree(i)) as f64;
                let di = &d_agg[i * fout..(i + 1) * fout];
                for j in core::iter::once(i).chain(graph.neighbors(i).iter().copied()) {
                    for (dz, &dv) in d_z[j * fout..(j + 1) * fout].iter_mut().zip(di) {
                        *dz += dv * inv;
                    }
                }
            }
            let wi = self_block(params, k);
            let gw = &mut grads[wi.clone()];
            for i in 0..n {
                outer_acc(gw, &lc.input[i * fin..(i + 1) * fin], &d_z[i * fout..(i + 1) * fout]);
            }
            if params.config.bias {
                let bi = params.layout.block(params.block_index(k) + 1).range();
                for i in 0..n {
                    for (g, dz) in grads[bi.clone()].iter_mut().zip(&d_z[i * fout..(i + 1) * fout]) {
                        *g += dz;
                    }
                }
            }
            if k == 0 {
                break;
            }
            // d_in = d_z Wᵀ
            let mut d_in = alloc::vec![0.0; n * fin];
            for i in 0..n {
                let dzi = &d_z[i * fout..(i + 1) * fout];
                for (c, d) in d_in[i * fin..(i + 1) * fin].iter_mut().enumerate() {
                    *d = math::dot(&w[c * fout..(c + 1) * fout], dzi);
                }
            }
            d_out = d_in;
        }
    }
}

fn self_block(params: &EncoderParams, k: usize) -> core::ops::Range<usize> {
    params.layout.block(params.block_index(k)).range()
}
