//! Encoder and decoder assembled into one forecaster, with or without a graph.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PanelDataset, Window};
use crate::decoder::{
    decoder_backward, decoder_forward, sample_forecast, sequence_loss, DecoderConfig, DecoderParams, DecoderSequence,
    ForecastContext, SamplePaths,
};
use crate::encoder::{encode_window, encoder_backward, EncoderConfig, EncoderParams, WindowEmbeddings};
use crate::graph::{window_node_features_probed, NodeFeatureWindow, SimilarityGraph};
use crate::params::Pass;
use crate::student_t::LossWeights;
use crate::{Error, Result};

/// Which input a demand value was read for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadKind {
    /// Node feature of the graph encoder.
    GraphFeature,
    /// Lagged demand fed to the decoder.
    DecoderLag,
    /// Demand a likelihood term is scored against.
    Target,
}

/// Receives every demand read made while building model inputs.
pub trait AccessObserver {
    fn demand_read(&mut self, kind: ReadKind, anchor: usize, article: usize, week: usize);
}

impl AccessObserver for () {
    #[inline]
    fn demand_read(&mut self, _: ReadKind, _: usize, _: usize, _: usize) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphModelConfig {
    pub encoder: EncoderConfig,
    pub node_lag_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub decoder: DecoderConfig,
    /// `None` is the plain autoregressive baseline.
    pub graph: Option<GraphModelConfig>,
}

impl ModelConfig {
    pub fn baseline(n_static: usize, n_dynamic: usize) -> Self {
        Self {
            decoder: DecoderConfig::new(n_static, n_dynamic, 0),
            graph: None,
        }
    }

    pub fn with_graph(n_static: usize, n_dynamic: usize, node_lag_depth: usize) -> Self {
        let encoder = EncoderConfig::new(node_lag_depth + 1);
        Self {
            decoder: DecoderConfig::new(n_static, n_dynamic, encoder.output_dim()),
            graph: Some(GraphModelConfig { encoder, node_lag_depth }),
        }
    }

    /// Make the decoder's embedding channel and the encoder input width
    /// agree with the rest of the configuration.
    pub fn reconcile(&mut self) {
        match &mut self.graph {
            Some(g) => {
                g.encoder.input_width = g.node_lag_depth + 1;
                self.decoder.embedding_dim = g.encoder.output_dim();
            }
            None => self.decoder.embedding_dim = 0,
        }
    }
}

/// Parameters of a trained or freshly initialised forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDeepAr {
    pub config: ModelConfig,
    pub encoder: Option<EncoderParams>,
    pub decoder: DecoderParams,
    /// Divisor applied to demand lags before they enter the graph encoder.
    pub node_feature_scale: f64,
}

/// Gradients of the mean loss of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrads {
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
    pub loss_sum: f64,
    pub n_terms: usize,
}

impl BatchGrads {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.n_terms.max(1) as f64
    }
}

/// One forecast row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub article: usize,
    pub week: usize,
    /// Anchor the forecast was issued from.
    pub origin: usize,
    pub quantiles: Vec<f64>,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointForecast {
    Mean,
    Median,
}

impl ForecastRecord {
    pub fn point(&self, kind: PointForecast) -> f64 {
        match kind {
            PointForecast::Mean => self.mean,
            PointForecast::Median => self.median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSettings {
    pub n_samples: usize,
    pub quantiles: Vec<f64>,
    pub seed: u64,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            n_samples: 100,
            quantiles: alloc::vec![0.1, 0.5, 0.9],
            seed: 0,
        }
    }
}

/// Mean observed demand over weeks `range` plus one.
fn window_scale(data: &PanelDataset, article: usize, range: Range<usize>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for w in range {
        if data.observed(article, w) {
            sum += data.demand(article, w);
            count += 1;
        }
    }
    1.0 + if count > 0 { sum / count as f64 } else { 0.0 }
}

/// Seed of forecast (origin, article) derived from a base seed.
fn forecast_seed(seed: u64, origin: usize, article: usize) -> u64 {
    let mut z = seed ^ ((origin as u64) << 32 | article as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl GraphDeepAr {
    /// Fresh parameters. `node_feature_scale` should be a typical training
    /// demand level (see [`GraphDeepAr::demand_level`]).
    pub fn init(mut config: ModelConfig, node_feature_scale: f64, seed: u64) -> Result<Self> {
        config.reconcile();
        if !(node_feature_scale > 0.0 && node_feature_scale.is_finite()) {
            return Err(Error::Config(alloc::format!("node feature scale {node_feature_scale} must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = match &config.graph {
            Some(g) => Some(EncoderParams::init(g.encoder.clone(), &mut rng)?),
            None => None,
        };
        let decoder = DecoderParams::init(config.decoder.clone(), &mut rng)?;
        Ok(Self {
            config,
            encoder,
            decoder,
            node_feature_scale,
        })
    }

    /// 1 + mean observed demand over `weeks`.
    pub fn demand_level(data: &PanelDataset, weeks: Range<usize>) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..data.n_articles() {
            for w in weeks.clone() {
                if data.observed(i, w) {
                    sum += data.demand(i, w);
                    count += 1;
                }
            }
        }
        1.0 + if count > 0 { sum / count as f64 } else { 0.0 }
    }

    pub fn is_graph(&self) -> bool {
        self.encoder.is_some()
    }

    pub fn context_length(&self) -> usize {
        self.config.decoder.context_length
    }

    pub fn horizon(&self) -> usize {
        self.config.decoder.horizon
    }

    /// Name and size of every parameter block.
    pub fn parameter_inventory(&self) -> Vec<(String, usize)> {
        let enc = self.encoder.iter().flat_map(|e| e.layout.blocks.iter());
        enc.chain(self.decoder.layout.blocks.iter())
            .map(|b| (b.name.clone(), b.len()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.as_ref().map_or(0, |e| e.values.len()) + self.decoder.values.len()
    }

    /// Node features for the `steps` weeks ending at `anchor`, demand scaled.
    fn node_features(
        &self,
        graph: &SimilarityGraph,
        data: &PanelDataset,
        anchor: usize,
        steps: usize,
        observer: &mut dyn AccessObserver,
    ) -> Result<NodeFeatureWindow> {
        let g = self.config.graph.as_ref().expect("graph model");
        let mut probe = |article: usize, week: usize| observer.demand_read(ReadKind::GraphFeature, anchor, article, week);
        let mut f = window_node_features_probed(graph, data, anchor, steps, g.node_lag_depth, &mut probe)?;
        let width = f.width;
        for (k, v) in f.values.iter_mut().enumerate() {
            if k % width != width - 1 {
                *v /= self.node_feature_scale;
            }
        }
        Ok(f)
    }

    /// Embeddings of every node for the context of `anchor`.
    pub fn embed(
        &self,
        graph: &SimilarityGraph,
        data: &PanelDataset,
        anchor: usize,
        pass: &mut Pass<'_>,
        observer: &mut dyn AccessObserver,
    ) -> Result<Option<(WindowEmbeddings, crate::encoder::EncoderCache)>> {
        match &self.encoder {
            None => Ok(None),
            Some(enc) => {
                let f = self.node_features(graph, data, anchor, self.context_length(), observer)?;
                Ok(Some(encode_window(&f, graph, enc, pass)?))
            }
        }
    }

    /// Teacher-forced decoder inputs for a window. With `horizon_only`, only
    /// the K horizon targets are scored.
    pub fn training_sequence(
        &self,
        data: &PanelDataset,
        window: Window,
        embeddings: Option<&WindowEmbeddings>,
        horizon_only: bool,
        observer: &mut dyn AccessObserver,
    ) -> DecoderSequence {
        let p = self.context_length();
        let steps = self.config.decoder.steps();
        let d = self.config.decoder.embedding_dim;
        let i = window.article;
        let first = window.anchor + 1 - p;
        let mut seq = DecoderSequence {
            lags: Vec::with_capacity(steps),
            embeddings: Vec::with_capacity(steps * d),
            static_features: data.static_row(i).to_vec(),
            dynamic: Vec::with_capacity(steps * data.n_dynamic()),
            targets: Vec::with_capacity(steps),
            target_mask: Vec::with_capacity(steps),
            scale: window_scale(data, i, window.context(p)),
        };
        for s in 0..steps {
            let w = first + s;
            observer.demand_read(ReadKind::DecoderLag, window.anchor, i, w);
            seq.lags.push(data.demand(i, w));
            if let Some(e) = embeddings {
                seq.embeddings.extend_from_slice(e.column(i, s.min(p - 1)));
            }
            seq.dynamic.extend_from_slice(data.dynamic(w + 1));
            observer.demand_read(ReadKind::Target, window.anchor, i, w + 1);
            seq.targets.push(data.demand(i, w + 1));
            seq.target_mask.push(data.observed(i, w + 1) && (!horizon_only || s + 1 >= p));
        }
        seq
    }

    /// Mean (weighted) likelihood loss of a batch and its gradients. A graph
    /// model requires every window of the batch to share one anchor.
    pub fn batch_gradients(
        &self,
        data: &PanelDataset,
        graph: Option<&SimilarityGraph>,
        batch: &[Window],
        weights: &LossWeights,
        rng: &mut dyn RngCore,
        observer: &mut dyn AccessObserver,
    ) -> Result<BatchGrads> {
        let mut grads = BatchGrads {
            encoder: alloc::vec![0.0; self.encoder.as_ref().map_or(0, |e| e.values.len())],
            decoder: alloc::vec![0.0; self.decoder.values.len()],
            loss_sum: 0.0,
            n_terms: 0,
        };
        if batch.is_empty() {
            return Ok(grads);
        }
        let mut pass = Pass::Train(rng);
        let encoded = match (&self.encoder, graph) {
            (Some(_), Some(g)) => {
                let anchor = batch[0].anchor;
                if batch.iter().any(|w| w.anchor != anchor) {
                    return Err(Error::Config("graph training needs single-anchor (synchronized) batches".into()));
                }
                self.embed(g, data, anchor, &mut pass, observer)?
            }
            (Some(_), None) => return Err(Error::Config("graph model needs a graph".into())),
            (None, _) => None,
        };
        let mut d_emb = encoded.as_ref().map(|(e, _)| alloc::vec![0.0; e.values.len()]);
        let p = self.context_length();
        let d = self.config.decoder.embedding_dim;
        for &w in batch {
            let seq = self.training_sequence(data, w, encoded.as_ref().map(|(e, _)| e), false, observer);
            let (dists, cache) = decoder_forward(&self.decoder, &seq, &mut pass)?;
            let (loss, n, d_out) = sequence_loss(&dists, &seq, weights);
            grads.loss_sum += loss;
            grads.n_terms += n;
            let de = decoder_backward(&self.decoder, &cache, &d_out, &mut grads.decoder);
            if let (Some(buf), Some((e, _))) = (&mut d_emb, &encoded) {
                for s in 0..seq.steps() {
                    let col = s.min(p - 1);
                    let off = (col * e.n_nodes + w.article) * d;
                    for (a, b) in buf[off..off + d].iter_mut().zip(&de[s * d..(s + 1) * d]) {
                        *a += b;
                    }
                }
            }
        }
        if let (Some(enc), Some((_, cache)), Some(buf)) = (&self.encoder, &encoded, &d_emb) {
            encoder_backward(enc, cache, buf, &mut grads.encoder);
        }
        let inv = 1.0 / grads.n_terms.max(1) as f64;
        for g in grads.encoder.iter_mut().chain(grads.decoder.iter_mut()) {
            *g *= inv;
        }
        Ok(grads)
    }

    /// Summed likelihood loss and term count over windows, evaluated with
    /// the full graph and no dropout. With `horizon_only`, context steps are
    /// not scored.
    pub fn evaluate_loss(
        &self,
        data: &PanelDataset,
        graph: Option<&SimilarityGraph>,
        windows: &[Window],
        weights: &LossWeights,
        horizon_only: bool,
    ) -> Result<(f64, usize)> {
        let mut total = 0.0;
        let mut count = 0;
        let mut k = 0;
        while k < windows.len() {
            let anchor = windows[k].anchor;
            let end = k + windows[k..].iter().take_while(|w| w.anchor == anchor).count();
            let emb = match graph {
                Some(g) => self.embed(g, data, anchor, &mut Pass::Eval, &mut ())?,
                None if self.is_graph() => return Err(Error::Config("graph model needs a graph".into())),
                None => None,
            };
            for &w in &windows[k..end] {
                let seq = self.training_sequence(data, w, emb.as_ref().map(|(e, _)| e), horizon_only, &mut ());
                let (dists, _) = decoder_forward(&self.decoder, &seq, &mut Pass::Eval)?;
                let (l, n, _) = sequence_loss(&dists, &seq, weights);
                total += l;
                count += n;
            }
            k = end;
        }
        Ok((total, count))
    }

    /// Decoder inputs for forecasting `k` weeks after `origin`. Unobserved
    /// context weeks (including weeks before the panel starts) read as 0.
    pub fn forecast_context(
        &self,
        data: &PanelDataset,
        article: usize,
        origin: usize,
        k: usize,
        embeddings: Option<&WindowEmbeddings>,
    ) -> Result<ForecastContext> {
        let p = self.context_length();
        let d = self.config.decoder.embedding_dim;
        let first = origin as isize + 1 - p as isize;
        let last_dyn = origin + k;
        let total = data.n_weeks() + data.future_weeks();
        if last_dyn >= total {
            return Err(Error::WeekOutOfRange {
                week: last_dyn,
                needed: first,
                len: total,
            });
        }
        let mut lags = Vec::with_capacity(p);
        let (mut sum, mut cnt) = (0.0, 0usize);
        for s in 0..p {
            let w = first + s as isize;
            let v = if w >= 0 && (w as usize) < data.n_weeks() && data.observed(article, w as usize) {
                sum += data.demand(article, w as usize);
                cnt += 1;
                data.demand(article, w as usize)
            } else {
                0.0
            };
            lags.push(v);
        }
        let mut dynamic = Vec::with_capacity((p + k - 1) * data.n_dynamic());
        for s in 0..p + k - 1 {
            let target = first + s as isize + 1;
            // weeks before the panel reuse the first week's calendar row
            dynamic.extend_from_slice(data.dynamic(target.max(0) as usize));
        }
        let embeddings = match embeddings {
            Some(e) => (0..p).flat_map(|s| e.column(article, s).iter().copied()).collect(),
            None => Vec::new(),
        };
        debug_assert_eq!(embeddings.len(), p * d);
        Ok(ForecastContext {
            lags,
            embeddings,
            static_features: data.static_row(article).to_vec(),
            dynamic,
            scale: 1.0 + if cnt > 0 { sum / cnt as f64 } else { 0.0 },
        })
    }

    /// Sample paths for every article from one origin.
    pub fn forecast_origin(
        &self,
        data: &PanelDataset,
        graph: Option<&SimilarityGraph>,
        origin: usize,
        k: usize,
        settings: &ForecastSettings,
    ) -> Result<Vec<SamplePaths>> {
        let emb = match (self.is_graph(), graph) {
            (true, Some(g)) => self.embed(g, data, origin, &mut Pass::Eval, &mut ())?,
            (true, None) => return Err(Error::Config("graph model needs a graph".into())),
            _ => None,
        };
        (0..data.n_articles())
            .map(|i| {
                let ctx = self.forecast_context(data, i, origin, k, emb.as_ref().map(|(e, _)| e))?;
                sample_forecast(&self.decoder, &ctx, k, settings.n_samples, forecast_seed(settings.seed, origin, i))
            })
            .collect()
    }

    /// Rolling forecasts over `weeks`: origins at `weeks.start − 1`, then every
    /// K weeks; the last block is truncated at `weeks.end`.
    pub fn forecast_range(
        &self,
        data: &PanelDataset,
        graph: Option<&SimilarityGraph>,
        weeks: Range<usize>,
        settings: &ForecastSettings,
    ) -> Result<Vec<ForecastRecord>> {
        if weeks.start == 0 || weeks.is_empty() {
            return Err(Error::InvalidArgument(alloc::format!("cannot forecast weeks {weeks:?}")));
        }
        let k_max = self.horizon();
        let mut out = Vec::new();
        let mut origin = weeks.start - 1;
        while origin + 1 < weeks.end {
            let k = k_max.min(weeks.end - origin - 1);
            let paths = self.forecast_origin(data, graph, origin, k, settings)?;
            for (article, p) in paths.iter().enumerate() {
                let q = crate::decoder::forecast_quantiles(p, &settings.quantiles)?;
                let med = crate::decoder::forecast_quantiles(p, &[0.5])?;
                let mean = p.mean();
                for h in 0..k {
                    let nq = settings.quantiles.len();
                    out.push(ForecastRecord {
                        article,
                        week: origin + 1 + h,
                        origin,
                        quantiles: q[h * nq..(h + 1) * nq].to_vec(),
                        mean: mean[h],
                        median: med[h],
                    });
                }
            }
            origin += k;
        }
        out.sort_by_key(|r| (r.article, r.week));
        Ok(out)
    }

    /// Embedding of every article at each week in `weeks` (eval mode, full
    /// graph), as (article, week, vector) rows ordered by article then week.
    pub fn export_embeddings(
        &self,
        data: &PanelDataset,
        graph: &SimilarityGraph,
        weeks: Range<usize>,
    ) -> Result<Vec<(usize, usize, Vec<f64>)>> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::Config("model has no graph encoder".into()))?;
        let lag = self.config.graph.as_ref().map_or(1, |g| g.node_lag_depth);
        let start = weeks.start.max(lag - 1);
        let mut rows = Vec::new();
        for w in start..weeks.end.min(data.n_weeks()) {
            let f = self.node_features(graph, data, w, 1, &mut ())?;
            let (e, _) = encode_window(&f, graph, enc, &mut Pass::Eval)?;
            for i in 0..data.n_articles() {
                rows.push((i, w, e.column(i, 0).to_vec()));
            }
        }
        rows.sort_by_key(|r| (r.0, r.1));
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_windows;
    use crate::graph::{build_graph, pairwise_similarity};
    use crate::synthetic::{generate_synthetic_panel, SyntheticSpec};
    use alloc::vec;

    fn small() -> (PanelDataset, SimilarityGraph) {
        let spec = SyntheticSpec {
            n_articles: 6,
            n_clusters: 2,
            n_weeks: 20,
            ..SyntheticSpec::default()
        };
        let p = generate_synthetic_panel(&spec).unwrap();
        let sims = pairwise_similarity(p.data.static_matrix(), p.data.n_static(), 4).unwrap();
        let g = build_graph(6, sims, 0.95).unwrap();
        (p.data, g)
    }

    fn config(graph: bool) -> ModelConfig {
        let mut c = if graph {
            ModelConfig::with_graph(2, 2, 1)
        } else {
            ModelConfig::baseline(2, 2)
        };
        c.decoder.hidden_sizes = vec![5, 4];
        c.decoder.context_length = 4;
        c.decoder.horizon = 2;
        c
    }

    #[test]
    fn baseline_has_no_encoder_weights() {
        let m = GraphDeepAr::init(config(false), 2.0, 1).unwrap();
        assert!(m.parameter_inventory().iter().all(|(n, _)| !n.starts_with("encoder")));
        let g = GraphDeepAr::init(config(true), 2.0, 1).unwrap();
        assert!(g.parameter_inventory().iter().any(|(n, _)| n.starts_with("encoder")));
        assert_eq!(g.config.decoder.embedding_dim, 8);
    }

    #[test]
    fn batch_gradients_match_finite_differences() {
        let (data, graph) = small();
        let mut model = GraphDeepAr::init(config(true), 2.0, 3).unwrap();
        model.config.decoder.dropout = 0.0;
        model.decoder.config.dropout = 0.0;
        if let Some(e) = &mut model.encoder {
            e.config.dropout = 0.0;
        }
        let ws = make_windows(&data, 4, 2).unwrap();
        let batch: Vec<Window> = ws.entries.iter().filter(|w| w.anchor == 8).copied().collect();
        let weights = LossWeights::new(1.5, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = model.batch_gradients(&data, Some(&graph), &batch, &weights, &mut rng, &mut ()).unwrap();
        let loss = |m: &GraphDeepAr| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            m.batch_gradients(&data, Some(&graph), &batch, &weights, &mut rng, &mut ())
                .unwrap()
                .mean_loss()
        };
        let h = 1e-6;
        for k in (0..model.encoder.as_ref().unwrap().values.len()).step_by(7) {
            let mut m = model.clone();
            m.encoder.as_mut().unwrap().values[k] += h;
            let up = loss(&m);
            m.encoder.as_mut().unwrap().values[k] -= 2.0 * h;
            let fd = (up - loss(&m)) / (2.0 * h);
            assert!((fd - g.encoder[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "enc {k}: {fd} vs {}", g.encoder[k]);
        }
        for k in (0..model.decoder.values.len()).step_by(13) {
            let mut m = model.clone();
            m.decoder.values[k] += h;
            let up = loss(&m);
            m.decoder.values[k] -= 2.0 * h;
            let fd = (up - loss(&m)) / (2.0 * h);
            assert!((fd - g.decoder[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "dec {k}: {fd} vs {}", g.decoder[k]);
        }
    }

    #[test]
    fn forecasts_cover_the_range_once() {
        let (data, graph) = small();
        let model = GraphDeepAr::init(config(true), 2.0, 3).unwrap();
        let settings = ForecastSettings {
            n_samples: 20,
            ..ForecastSettings::default()
        };
        let recs = model.forecast_range(&data, Some(&graph), 13..20, &settings).unwrap();
        assert_eq!(recs.len(), 6 * 7);
        assert_eq!(recs[0].origin, 12);
        assert_eq!(recs[6].origin, 18);
        assert!(recs.iter().all(|r| r.quantiles[0] <= r.quantiles[1] && r.quantiles[1] <= r.quantiles[2]));
        assert_eq!(recs, model.forecast_range(&data, Some(&graph), 13..20, &settings).unwrap());
    }
}
