//! Single LSTM cell with an explicit backward pass.
//!
//! Gates are stacked in the order input, forget, cell, output:
//!
//! ```text
//! z = W_ih x + W_hh h + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c' = f ⊙ c + i ⊙ g
//! h' = o ⊙ tanh(c')
//! ```

use alloc::vec::Vec;

use crate::math;
use crate::params::{gemv_acc, gemv_t_acc, outer_acc};

/// Borrowed weights of one LSTM layer.
#[derive(Clone, Copy)]
pub struct LstmWeights<'a> {
    pub input: usize,
    pub hidden: usize,
    /// 4H × I.
    pub w_ih: &'a [f64],
    /// 4H × H.
    pub w_hh: &'a [f64],
    /// 4H.
    pub bias: &'a [f64],
}

/// Mutable gradient buffers matching [`LstmWeights`].
pub struct LstmGrads<'a> {
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub bias: &'a mut [f64],
}

#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates, 4H.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Advance one step; returns (h, c, cache).
pub fn lstm_step(w: LstmWeights<'_>, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, StepCache) {
    let hd = w.hidden;
    let mut z = w.bias.to_vec();
    gemv_acc(w.w_ih, 4 * hd, w.input, x, &mut z);
    gemv_acc(w.w_hh, 4 * hd, hd, h_prev, &mut z);
    for (k, v) in z.iter_mut().enumerate() {
        *v = if (2 * hd..3 * hd).contains(&k) {
            math::tanh(*v)
        } else {
            math::sigmoid(*v)
        };
    }
    let mut c = Vec::with_capacity(hd);
    let mut tanh_c = Vec::with_capacity(hd);
    let mut h = Vec::with_capacity(hd);
    for u in 0..hd {
        let (i, f, g, o) = (z[u], z[hd + u], z[2 * hd + u], z[3 * hd + u]);
        let cu = f * c_prev[u] + i * g;
        let tc = math::tanh(cu);
        c.push(cu);
        tanh_c.push(tc);
        h.push(o * tc);
    }
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        c: c.clone(),
        tanh_c,
    };
    (h, c, cache)
}

/// Backpropagate one step. `dh` is the total gradient reaching h' (from the
/// layer above and from the next step), `dc` the gradient reaching c' from the
/// next step. Accumulates weight gradients and returns (dx, dh_prev, dc_prev).
pub fn lstm_step_backward(
    w: LstmWeights<'_>,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads<'_>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = w.hidden;
    let z = &cache.gates;
    let mut dz = alloc::vec![0.0; 4 * hd];
    let mut dc_prev = alloc::vec![0.0; hd];
    for u in 0..hd {
        let (i, f, g, o) = (z[u], z[hd + u], z[2 * hd + u], z[3 * hd + u]);
        let tc = cache.tanh_c[u];
        let d_o = dh[u] * tc;
        let dcu = dc[u] + dh[u] * o * (1.0 - tc * tc);
        let d_i = dcu * g;
        let d_g = dcu * i;
        let d_f = dcu * cache.c_prev[u];
        dc_prev[u] = dcu * f;
        dz[u] = d_i * i * (1.0 - i);
        dz[hd + u] = d_f * f * (1.0 - f);
        dz[2 * hd + u] = d_g * (1.0 - g * g);
        dz[3 * hd + u] = d_o * o * (1.0 - o);
    }
    outer_acc(grads.w_ih, &dz, &cache.x);
    outer_acc(grads.w_hh, &dz, &cache.h_prev);
    for (g, d) in grads.bias.iter_mut().zip(&dz) {
        *g += d;
    }
    let mut dx = alloc::vec![0.0; w.input];
    gemv_t_acc(w.w_ih, 4 * hd, w.input, &dz, &mut dx);
    let mut dh_prev = alloc::vec![0.0; hd];
    gemv_t_acc(w.w_hh, 4 * hd, hd, &dz, &mut dh_prev);
    (dx, dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_unit_cell_by_hand() {
        // I = 1, H = 1, gate rows (i, f, g, o)
        let w_ih = [0.5, -0.3, 0.8, 0.1];
        let w_hh = [0.2, 0.4, -0.6, 0.3];
        let bias = [0.1, 1.0, 0.0, -0.2];
        let w = LstmWeights {
            input: 1,
            hidden: 1,
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
        };
        let (x, h0, c0) = (1.5, 0.25, -0.4);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.5 * x + 0.2 * h0 + 0.1);
        let f = sig(-0.3 * x + 0.4 * h0 + 1.0);
        let g = (0.8 * x - 0.6 * h0).tanh();
        let o = sig(0.1 * x + 0.3 * h0 - 0.2);
        let c = f * c0 + i * g;
        let h = o * c.tanh();
        let (hh, cc, _) = lstm_step(w, &[x], &[h0], &[c0]);
        assert!((hh[0] - h).abs() < 1e-15);
        assert!((cc[0] - c).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (input, hidden) = (3, 2);
        let mut p: Vec<f64> = (0..4 * hidden * (input + hidden + 1))
            .map(|k| ((k * 37 % 17) as f64 - 8.0) / 10.0)
            .collect();
        let x = vec![0.3, -1.2, 0.7];
        let h0 = vec![0.1, -0.2];
        let c0 = vec![0.5, 0.05];
        let split = |p: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
            let a = 4 * hidden * input;
            let b = a + 4 * hidden * hidden;
            (p[..a].to_vec(), p[a..b].to_vec(), p[b..].to_vec())
        };
        // loss = Σ h'·r + Σ c'·q
        let r = [0.7, -1.1];
        let q = [0.2, 0.4];
        let loss = |p: &[f64]| {
            let (a, b, c) = split(p);
            let w = LstmWeights {
                input,
                hidden,
                w_ih: &a,
                w_hh: &b,
                bias: &c,
            };
            let (h, c, _) = lstm_step(w, &x, &h0, &c0);
            h.iter().zip(&r).map(|(u, v)| u * v).sum::<f64>() + c.iter().zip(&q).map(|(u, v)| u * v).sum::<f64>()
        };
        let (a, b, c) = split(&p);
        let w = LstmWeights {
            input,
            hidden,
            w_ih: &a,
            w_hh: &b,
            bias: &c,
        };
        let (_, _, cache) = lstm_step(w, &x, &h0, &c0);
        let mut g = vec![0.0; p.len()];
        let (ga, rest) = g.split_at_mut(4 * hidden * input);
        let (gb, gc) = rest.split_at_mut(4 * hidden * hidden);
        let mut grads = LstmGrads {
            w_ih: ga,
            w_hh: gb,
            bias: gc,
        };
        lstm_step_backward(w, &cache, &r, &q, &mut grads);
        for k in 0..p.len() {
            let h = 1e-6;
            let orig = p[k];
            p[k] = orig + h;
            let up = loss(&p);
            p[k] = orig - h;
            let down = loss(&p);
            p[k] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8, "param {k}: {fd} vs {}", g[k]);
        }
    }
}
