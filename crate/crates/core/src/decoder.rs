//! Autoregressive LSTM decoder with a Student-t output head.
//!
//! A window anchored at week `t` is unrolled for `P + K − 1` steps. Step `s`
//! reads the demand of week `w = t + 1 − P + s` together with the graph
//! embedding of that week (the last context embedding is reused once `w`
//! passes the anchor), the static features and the calendar features of week
//! `w + 1`, and emits a Student-t distribution for the demand of week `w + 1`.
//! The last context step therefore forecasts the first horizon week.
//!
//! Demand is divided by a per-window scale `1 + mean context demand` on the
//! way in; location and scale are multiplied back on the way out.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lstm::{lstm_step, lstm_step_backward, LstmGrads, LstmWeights, StepCache};
use crate::math;
use crate::params::{fill_uniform, gemv_acc, outer_acc, ParamLayout, Pass};
use crate::student_t::{t_nll, t_nll_grad, LossWeights, TStudentParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DofMode {
    /// ν = 2 + softplus(head output).
    Learned,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout: f64,
    pub context_length: usize,
    pub horizon: usize,
    /// Width of the graph embedding channel; 0 without a graph encoder.
    pub embedding_dim: usize,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub dof: DofMode,
}

impl DecoderConfig {
    pub fn new(n_static: usize, n_dynamic: usize, embedding_dim: usize) -> Self {
        Self {
            hidden_sizes: alloc::vec![128, 128],
            dropout: 0.2,
            context_length: 10,
            horizon: 4,
            embedding_dim,
            n_static,
            n_dynamic,
            dof: DofMode::Learned,
        }
    }

    /// lagged demand, embedding, static, dynamic.
    pub fn input_width(&self) -> usize {
        1 + self.embedding_dim + self.n_static + self.n_dynamic
    }

    /// Recurrent steps per training window.
    pub fn steps(&self) -> usize {
        self.context_length + self.horizon - 1
    }

    fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Config("decoder hidden sizes must be positive and non-empty".into()));
        }
        if self.context_length == 0 || self.horizon == 0 {
            return Err(Error::Config("context length and horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(alloc::format!("decoder dropout {} outside [0, 1)", self.dropout)));
        }
        if let DofMode::Fixed(nu) = self.dof {
            if !(nu > 2.0) {
                return Err(Error::Config(alloc::format!("fixed degrees of freedom {nu} must exceed 2")));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::default();
        let mut fin = self.input_width();
        for (k, &h) in self.hidden_sizes.iter().enumerate() {
            layout.push(alloc::format!("decoder.lstm{k}.w_ih"), 4 * h, fin);
            layout.push(alloc::format!("decoder.lstm{k}.w_hh"), 4 * h, h);
            layout.push(alloc::format!("decoder.lstm{k}.bias"), 1, 4 * h);
            fin = h;
        }
        layout.push("decoder.head.weight", 3, fin);
        layout.push("decoder.head.bias", 1, 3);
        layout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub config: DecoderConfig,
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

impl DecoderParams {
    /// Uniform ±1/√H recurrent weights, forget-gate bias 1, and a head biased
    /// towards unit location, scale 0.5 and ν ≈ 10.
    pub fn init(config: DecoderConfig, rng: &mut dyn RngCore) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut values = alloc::vec![0.0; layout.len()];
        for (k, &h) in config.hidden_sizes.iter().enumerate() {
            let bound = 1.0 / math::sqrt(h as f64);
            for b in 0..3 {
                let block = layout.block(3 * k + b);
                fill_uniform(&mut values[block.range()], bound, rng);
            }
            let bias = layout.block(3 * k + 2);
            for v in &mut values[bias.offset + h..bias.offset + 2 * h] {
                *v = 1.0;
            }
        }
        let nl = config.hidden_sizes.len();
        let head = layout.block(3 * nl);
        let bound = 1.0 / math::sqrt(head.cols as f64);
        fill_uniform(&mut values[head.range()], bound, rng);
        let hb = layout.block(3 * nl + 1).offset;
        values[hb] = 1.0;
        values[hb + 1] = math::softplus_inv(0.5);
        values[hb + 2] = math::softplus_inv(8.0);
        Ok(Self { config, layout, values })
    }

    pub fn from_values(config: DecoderConfig, values: Vec<f64>) -> Result<Self> {
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
        self.config.hidden_sizes.len()
    }

    pub fn lstm(&self, k: usize) -> LstmWeights<'_> {
        let h = self.config.hidden_sizes[k];
        let w_ih = self.layout.block(3 * k);
        LstmWeights {
            input: w_ih.cols,
            hidden: h,
            w_ih: &self.values[w_ih.range()],
            w_hh: &self.values[self.layout.block(3 * k + 1).range()],
            bias: &self.values[self.layout.block(3 * k + 2).range()],
        }
    }

    fn head(&self) -> (&[f64], &[f64], usize) {
        let nl = self.n_layers();
        let w = self.layout.block(3 * nl);
        (&self.values[w.range()], &self.values[self.layout.block(3 * nl + 1).range()], w.cols)
    }

    /// Map raw head outputs to distribution parameters in demand units.
    fn distribution(&self, raw: &[f64; 3], scale: f64) -> TStudentParams {
        let dof = match self.config.dof {
            DofMode::Learned => 2.0 + math::softplus(raw[2]),
            DofMode::Fixed(nu) => nu,
        };
        TStudentParams::new_unchecked(raw[0] * scale, math::softplus(raw[1]) * scale, dof)
    }

    /// Assemble the step input vector from raw demand.
    pub fn step_input(&self, lag: f64, embedding: &[f64], static_features: &[f64], dynamic: &[f64], scale: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.config.input_width());
        x.push(lag / scale);
        x.extend_from_slice(embedding);
        x.extend_from_slice(static_features);
        x.extend_from_slice(dynamic);
        x
    }
}

/// Per-window decoder inputs, all in demand units.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSequence {
    /// Demand read at each step.
    pub lags: Vec<f64>,
    /// steps × embedding_dim (empty without a graph).
    pub embeddings: Vec<f64>,
    pub static_features: Vec<f64>,
    /// steps × n_dynamic, covariates of each step's target week.
    pub dynamic: Vec<f64>,
    /// Demand each step is scored against.
    pub targets: Vec<f64>,
    /// Whether each step's target contributes to the loss.
    pub target_mask: Vec<bool>,
    pub scale: f64,
}

impl DecoderSequence {
    pub fn steps(&self) -> usize {
        self.lags.len()
    }

    fn check(&self, config: &DecoderConfig) -> Result<()> {
        let s = self.steps();
        let d = config.embedding_dim;
        if self.embeddings.len() != s * d
            || self.dynamic.len() != s * config.n_dynamic
            || self.static_features.len() != config.n_static
            || self.targets.len() != s
            || self.target_mask.len() != s
        {
            return Err(Error::Shape {
                expected: (s, config.input_width()),
                got: (self.lags.len(), 1 + self.embeddings.len() / s.max(1) + self.static_features.len()),
            });
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::NonFiniteInput {
                channel: "scale",
                step: 0,
            });
        }
        for step in 0..s {
            let channels: [(&'static str, &[f64]); 4] = [
                ("lagged demand", &self.lags[step..step + 1]),
                ("embedding", &self.embeddings[step * d..(step + 1) * d]),
                ("static", &self.static_features),
                ("dynamic", &self.dynamic[step * config.n_dynamic..(step + 1) * config.n_dynamic]),
            ];
            for (channel, v) in channels {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteInput { channel, step });
                }
            }
        }
        Ok(())
    }

    fn input(&self, params: &DecoderParams, s: usize) -> Vec<f64> {
        let d = params.config.embedding_dim;
        let l = params.config.n_dynamic;
        params.step_input(
            self.lags[s],
            &self.embeddings[s * d..(s + 1) * d],
            &self.static_features,
            &self.dynamic[s * l..(s + 1) * l],
            self.scale,
        )
    }
}

/// Recurrent state of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl DecoderState {
    pub fn zeros(config: &DecoderConfig) -> Self {
        let z: Vec<Vec<f64>> = config.hidden_sizes.iter().map(|&h| alloc::vec![0.0; h]).collect();
        Self { h: z.clone(), c: z }
    }
}

/// Inference step: advance the state on `input` (as built by
/// [`DecoderParams::step_input`]) and return the distribution of the next week.
pub fn decoder_step(params: &DecoderParams, state: &mut DecoderState, input: &[f64], scale: f64) -> TStudentParams {
    let mut x = input.to_vec();
    for k in 0..params.n_layers() {
        let (h, c, _) = lstm_step(params.lstm(k), &x, &state.h[k], &state.c[k]);
        state.c[k] = c;
        x = h.clone();
        state.h[k] = h;
    }
    let (w, b, cols) = params.head();
    let mut raw = [b[0], b[1], b[2]];
    gemv_acc(w, 3, cols, &x, &mut raw);
    params.distribution(&raw, scale)
}

pub struct DecoderCache {
    /// steps × layers.
    cells: Vec<Vec<StepCache>>,
    /// Dropout multipliers on each non-final layer output, steps × (layers − 1).
    dropout: Vec<Vec<Option<Vec<f64>>>>,
    head_input: Vec<Vec<f64>>,
    raw: Vec<[f64; 3]>,
    scale: f64,
}

/// Teacher-forced pass over a whole sequence.
pub fn decoder_forward(
    params: &DecoderParams,
    seq: &DecoderSequence,
    pass: &mut Pass<'_>,
) -> Result<(Vec<TStudentParams>, DecoderCache)> {
    seq.check(&params.config)?;
    let nl = params.n_layers();
    let mut state = DecoderState::zeros(&params.config);
    let (w, b, cols) = params.head();
    let mut out = Vec::with_capacity(seq.steps());
    let mut cache = DecoderCache {
        cells: Vec::with_capacity(seq.steps()),
        dropout: Vec::with_capacity(seq.steps()),
        head_input: Vec::with_capacity(seq.steps()),
        raw: Vec::with_capacity(seq.steps()),
        scale: seq.scale,
    };
    for s in 0..seq.steps() {
        let mut x = seq.input(params, s);
        let mut cells = Vec::with_capacity(nl);
        let mut masks = Vec::with_capacity(nl.saturating_sub(1));
        for k in 0..nl {
            let (h, c, step_cache) = lstm_step(params.lstm(k), &x, &state.h[k], &state.c[k]);
            cells.push(step_cache);
            state.c[k] = c;
            x = h.clone();
            state.h[k] = h;
            if k + 1 < nl {
                let mask = pass.dropout_mask(x.len(), params.config.dropout);
                if let Some(m) = &mask {
                    for (v, f) in x.iter_mut().zip(m) {
                        *v *= f;
                    }
                }
                masks.push(mask);
            }
        }
        let mut raw = [b[0], b[1], b[2]];
        gemv_acc(w, 3, cols, &x, &mut raw);
        out.push(params.distribution(&raw, seq.scale));
        cache.cells.push(cells);
        cache.dropout.push(masks);
        cache.head_input.push(x);
        cache.raw.push(raw);
    }
    Ok((out, cache))
}

/// Backpropagate gradients of a loss with respect to (μ, s, ν) at every step
/// (demand units). Accumulates into `grads` (layout of `params.values`) and
/// returns the gradient with respect to the embedding channel, steps × D.
pub fn decoder_backward(params: &DecoderParams, cache: &DecoderCache, d_out: &[[f64; 3]], grads: &mut [f64]) -> Vec<f64> {
    let nl = params.n_layers();
    let steps = cache.cells.len();
    let d = params.config.embedding_dim;
    let mut d_emb = alloc::vec![0.0; steps * d];
    let mut dh_next: Vec<Vec<f64>> = params.config.hidden_sizes.iter().map(|&h| alloc::vec![0.0; h]).collect();
    let mut dc_next = dh_next.clone();
    let (w_head, _, cols) = params.head();
    let head_w = params.layout.block(3 * nl).range();
    let head_b = params.layout.block(3 * nl + 1).range();
    for s in (0..steps).rev() {
        let raw = cache.raw[s];
        let [dmu, ds, dnu] = d_out[s];
        let d_raw = [
            dmu * cache.scale,
            ds * cache.scale * math::sigmoid(raw[1]),
            match params.config.dof {
                DofMode::Learned => dnu * math::sigmoid(raw[2]),
                DofMode::Fixed(_) => 0.0,
            },
        ];
        outer_acc(&mut grads[head_w.clone()], &d_raw, &cache.head_input[s]);
        for (g, v) in grads[head_b.clone()].iter_mut().zip(&d_raw) {
            *g += v;
        }
        let mut dh = alloc::vec![0.0; cols];
        crate::params::gemv_t_acc(w_head, 3, cols, &d_raw, &mut dh);
        for k in (0..nl).rev() {
            if k + 1 < nl {
                if let Some(m) = &cache.dropout[s][k] {
                    for (v, f) in dh.iter_mut().zip(m) {
                        *v *= f;
                    }
                }
            }
            for (a, b) in dh.iter_mut().zip(&dh_next[k]) {
                *a += b;
            }
            let start = params.layout.block(3 * k).offset;
            let end = params.layout.block(3 * k + 2).range().end;
            let region = &mut grads[start..end];
            let (g_ih, rest) = region.split_at_mut(params.layout.block(3 * k).len());
            let (g_hh, g_b) = rest.split_at_mut(params.layout.block(3 * k + 1).len());
            let mut lg = LstmGrads {
                w_ih: g_ih,
                w_hh: g_hh,
                bias: g_b,
            };
            let (dx, dh_prev, dc_prev) = lstm_step_backward(params.lstm(k), &cache.cells[s][k], &dh, &dc_next[k], &mut lg);
            dh_next[k] = dh_prev;
            dc_next[k] = dc_prev;
            if k == 0 {
                d_emb[s * d..(s + 1) * d].copy_from_slice(&dx[1..1 + d]);
            }
            dh = dx;
        }
    }
    d_emb
}

/// Summed (weighted) likelihood loss over masked steps, the number of scored
/// steps, and the per-step gradient of the sum with respect to (μ, s, ν).
pub fn sequence_loss(
    dists: &[TStudentParams],
    seq: &DecoderSequence,
    weights: &LossWeights,
) -> (f64, usize, Vec<[f64; 3]>) {
    let mut total = 0.0;
    let mut count = 0;
    let mut grads = Vec::with_capacity(dists.len());
    for ((p, &y), &m) in dists.iter().zip(&seq.targets).zip(&seq.target_mask) {
        if m {
            let w = weights.weight(p, y);
            total += w * t_nll(p, y);
            count += 1;
            let (a, b, c) = t_nll_grad(p, y);
            grads.push([w * a, w * b, w * c]);
        } else {
            grads.push([0.0; 3]);
        }
    }
    (total, count, grads)
}

/// What the decoder needs to forecast from an anchor week.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastContext {
    /// Observed demand over the P context weeks.
    pub lags: Vec<f64>,
    /// P × embedding_dim.
    pub embeddings: Vec<f64>,
    pub static_features: Vec<f64>,
    /// (P + K − 1) × n_dynamic: covariates of the target week of each step.
    pub dynamic: Vec<f64>,
    pub scale: f64,
}

/// Monte-Carlo forecast paths, n_samples × K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePaths {
    pub n_samples: usize,
    pub horizon: usize,
    pub values: Vec<f64>,
}

impl SamplePaths {
    pub fn path(&self, k: usize) -> &[f64] {
        &self.values[k * self.horizon..(k + 1) * self.horizon]
    }

    /// All samples for horizon step `h`.
    pub fn step(&self, h: usize) -> Vec<f64> {
        (0..self.n_samples).map(|k| self.values[k * self.horizon + h]).collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.horizon)
            .map(|h| self.step(h).iter().sum::<f64>() / self.n_samples as f64)
            .collect()
    }
}

/// Roll the decoder over the context, then draw `n_samples` autoregressive
/// paths of length `k`: each draw (clamped at 0) is fed back as the next lag.
/// Path `j` uses stream `j` of a ChaCha generator seeded with `seed`, so
/// results do not depend on evaluation order.
pub fn sample_forecast(
    params: &DecoderParams,
    ctx: &ForecastContext,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SamplePaths> {
    if n_samples < 1 {
        return Err(Error::InvalidArgument("at least one sample path is required".into()));
    }
    let p = ctx.lags.len();
    let d = params.config.embedding_dim;
    let l = params.config.n_dynamic;
    if p == 0 || k == 0 || ctx.embeddings.len() != p * d || ctx.dynamic.len() < (p + k - 1) * l {
        return Err(Error::Shape {
            expected: (p + k - 1, l),
            got: (ctx.dynamic.len() / l.max(1), l),
        });
    }
    let mut state = DecoderState::zeros(&params.config);
    let mut first = None;
    for s in 0..p {
        let x = params.step_input(
            ctx.lags[s],
            &ctx.embeddings[s * d..(s + 1) * d],
            &ctx.static_features,
            &ctx.dynamic[s * l..(s + 1) * l],
            ctx.scale,
        );
        first = Some(decoder_step(params, &mut state, &x, ctx.scale));
    }
    let first = first.expect("p > 0");
    let last_emb = &ctx.embeddings[(p - 1) * d..p * d];
    let mut values = Vec::with_capacity(n_samples * k);
    for j in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let mut st = state.clone();
        let mut dist = first;
        for h in 0..k {
            let y = dist.sample(&mut rng).max(0.0);
            values.push(y);
            if h + 1 < k {
                let s = p + h;
                let x = params.step_input(y, last_emb, &ctx.static_features, &ctx.dynamic[s * l..(s + 1) * l], ctx.scale);
                dist = decoder_step(params, &mut st, &x, ctx.scale);
            }
        }
    }
    Ok(SamplePaths {
        n_samples,
        horizon: k,
        values,
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-step empirical quantiles, K × |qs| row-major.
pub fn forecast_quantiles(paths: &SamplePaths, qs: &[f64]) -> Result<Vec<f64>> {
    if paths.n_samples == 0 {
        return Err(Error::InvalidArgument("no sample paths".into()));
    }
    if let Some(q) = qs.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::InvalidArgument(alloc::format!("quantile level {q} outside (0, 1)")));
    }
    let mut out = Vec::with_capacity(paths.horizon * qs.len());
    for h in 0..paths.horizon {
        let mut v = paths.step(h);
        v.sort_by(f64::total_cmp);
        out.extend(qs.iter().map(|&q| empirical_quantile(&v, q)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn config(d: usize) -> DecoderConfig {
        let mut c = DecoderConfig::new(2, 1, d);
        c.hidden_sizes = vec![4, 3];
        c.context_length = 3;
        c.horizon = 2;
        c
    }

    fn seq(c: &DecoderConfig) -> DecoderSequence {
        let s = c.steps();
        DecoderSequence {
            lags: (0..s).map(|k| 1.0 + k as f64).collect(),
            embeddings: (0..s * c.embedding_dim).map(|k| (k as f64 * 0.37).sin()).collect(),
            static_features: vec![1.0, 0.0],
            dynamic: (0..s).map(|k| k as f64 / 10.0).collect(),
            targets: (0..s).map(|k| 2.0 + k as f64).collect(),
            target_mask: vec![true; s],
            scale: 3.0,
        }
    }

    #[test]
    fn zero_weights_give_the_head_bias() {
        let c = config(0);
        let mut p = DecoderParams::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let nl = p.n_layers();
        let hb = p.layout.block(3 * nl + 1).offset;
        for v in p.values.iter_mut() {
            *v = 0.0;
        }
        p.values[hb] = 0.7;
        p.values[hb + 1] = -0.4;
        p.values[hb + 2] = 1.3;
        let mut sq = seq(&c);
        sq.scale = 1.0;
        let (out, _) = decoder_forward(&p, &sq, &mut Pass::Eval).unwrap();
        for d in out {
            assert_eq!(d.mu(), 0.7);
            assert_eq!(d.scale(), math::softplus(-0.4));
            assert_eq!(d.dof(), 2.0 + math::softplus(1.3));
        }
    }

    #[test]
    fn zero_embeddings_match_the_graphless_decoder() {
        let with = config(2);
        let without = config(0);
        let pg = DecoderParams::init(with.clone(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        // copy shared columns: drop embedding columns 1..3 of the first w_ih
        let mut vals = Vec::new();
        for (bg, bn) in pg.layout.blocks.iter().zip(&without.layout().blocks) {
            let src = &pg.values[bg.range()];
            if bg.cols != bn.cols {
                for r in 0..bg.rows {
                    let row = &src[r * bg.cols..(r + 1) * bg.cols];
                    vals.push(row[0]);
                    vals.extend_from_slice(&row[3..]);
                }
            } else {
                vals.extend_from_slice(src);
            }
        }
        let pn = DecoderParams::from_values(without.clone(), vals).unwrap();
        let mut sg = seq(&with);
        sg.embeddings.iter_mut().for_each(|v| *v = 0.0);
        let sn = seq(&without);
        let (a, _) = decoder_forward(&pg, &sg, &mut Pass::Eval).unwrap();
        let (b, _) = decoder_forward(&pn, &sn, &mut Pass::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_input_names_the_channel() {
        let c = config(2);
        let p = DecoderParams::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut s = seq(&c);
        s.embeddings[5] = f64::NAN;
        let err = decoder_forward(&p, &s, &mut Pass::Eval).err().unwrap();
        assert_eq!(err, Error::NonFiniteInput { channel: "embedding", step: 2 });
    }

    #[test]
    fn step_api_matches_teacher_forced_forward() {
        let c = config(2);
        let p = DecoderParams::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let s = seq(&c);
        let (out, _) = decoder_forward(&p, &s, &mut Pass::Eval).unwrap();
        let mut st = DecoderState::zeros(&c);
        for (k, want) in out.iter().enumerate() {
            let x = s.input(&p, k);
            assert_eq!(decoder_step(&p, &mut st, &x, s.scale), *want);
        }
    }

    #[test]
    fn quantiles_of_degenerate_paths() {
        let paths = SamplePaths {
            n_samples: 4,
            horizon: 2,
            values: vec![7.0; 8],
        };
        assert_eq!(forecast_quantiles(&paths, &[0.1, 0.5, 0.9]).unwrap(), vec![7.0; 6]);
        let paths = SamplePaths {
            n_samples: 2,
            horizon: 1,
            values: vec![0.0, 10.0],
        };
        let q = forecast_quantiles(&paths, &[0.1, 0.5, 0.9]).unwrap();
        assert!((0.0..=10.0).contains(&q[1]));
        assert!(q[0] <= q[1] && q[1] <= q[2]);
        assert!(forecast_quantiles(&paths, &[1.0]).is_err());
    }

    #[test]
    fn sampling_requires_a_path_and_is_seeded() {
        let c = config(0);
        let p = DecoderParams::init(c.clone(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let ctx = ForecastContext {
            lags: vec![1.0, 2.0, 3.0],
            embeddings: vec![],
            static_features: vec![1.0, 0.0],
            dynamic: vec![0.1, 0.2, 0.3, 0.4],
            scale: 3.0,
        };
        assert!(sample_forecast(&p, &ctx, 2, 0, 1).is_err());
        let a = sample_forecast(&p, &ctx, 2, 50, 11).unwrap();
        let b = sample_forecast(&p, &ctx, 2, 50, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|&v| v >= 0.0));
    }
}
