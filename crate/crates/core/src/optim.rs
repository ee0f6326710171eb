//! First-order optimisers over flat parameter vectors.

use alloc::boxed::Box;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Updates one parameter vector in place from its gradient.
pub trait Optimizer {
    fn step(&mut self, params: &mut [f64], grads: &[f64]);
    fn name(&self) -> &'static str;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "defaults::beta1")]
        beta1: f64,
        #[serde(default = "defaults::beta2")]
        beta2: f64,
        #[serde(default = "defaults::eps")]
        eps: f64,
    },
    /// RAdam wrapped in Lookahead.
    Ranger {
        #[serde(default = "defaults::ranger_beta1")]
        beta1: f64,
        #[serde(default = "defaults::beta2")]
        beta2: f64,
        #[serde(default = "defaults::ranger_eps")]
        eps: f64,
        #[serde(default = "defaults::sync_period")]
        sync_period: usize,
        #[serde(default = "defaults::alpha")]
        alpha: f64,
    },
}

mod defaults {
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn eps() -> f64 {
        1e-8
    }
    pub fn ranger_beta1() -> f64 {
        0.95
    }
    pub fn ranger_eps() -> f64 {
        1e-5
    }
    pub fn sync_period() -> usize {
        6
    }
    pub fn alpha() -> f64 {
        0.5
    }
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Adam {
            beta1: defaults::beta1(),
            beta2: defaults::beta2(),
            eps: defaults::eps(),
        }
    }
}

impl OptimizerSpec {
    pub fn ranger() -> Self {
        OptimizerSpec::Ranger {
            beta1: defaults::ranger_beta1(),
            beta2: defaults::beta2(),
            eps: defaults::ranger_eps(),
            sync_period: defaults::sync_period(),
            alpha: defaults::alpha(),
        }
    }

    pub fn build(&self, lr: f64, n: usize) -> Box<dyn Optimizer> {
        match *self {
            OptimizerSpec::Sgd { momentum } => Box::new(Sgd::new(lr, momentum, n)),
            OptimizerSpec::Adam { beta1, beta2, eps } => Box::new(Adam::new(lr, beta1, beta2, eps, n)),
            OptimizerSpec::Ranger {
                beta1,
                beta2,
                eps,
                sync_period,
                alpha,
            } => Box::new(Lookahead::new(RAdam::new(lr, beta1, beta2, eps, n), sync_period, alpha)),
        }
    }
}

pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, n: usize) -> Self {
        Self {
            lr,
            momentum,
            velocity: alloc::vec![0.0; n],
        }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }

    fn name(&self) -> &'static str {
        "sgd"
    }
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, n: usize) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= self.lr * mh / (math::sqrt(vh) + self.eps);
        }
    }

    fn name(&self) -> &'static str {
        "adam"
    }
}

/// Adam with variance rectification: plain momentum steps until the
/// second-moment estimate is reliable.
pub struct RAdam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl RAdam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, n: usize) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: alloc::vec![0.0; n],
            v: alloc::vec![0.0; n],
        }
    }
}

impl Optimizer for RAdam {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let t = self.t as f64;
        let b2t = libm::pow(self.beta2, t);
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let rho_inf = 2.0 / (1.0 - self.beta2) - 1.0;
        let rho = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
        let rect = if rho > 5.0 {
            Some(math::sqrt(
                (1.0 - b2t) * (rho - 4.0) * (rho - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho),
            ))
        } else {
            None
        };
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mh = self.m[k] / c1;
            params[k] -= match rect {
                Some(r) => self.lr * r * mh / (math::sqrt(self.v[k]) + self.eps),
                None => self.lr * mh,
            };
        }
    }

    fn name(&self) -> &'static str {
        "radam"
    }
}

/// Every `sync_period` inner steps, pull slow weights towards the fast ones
/// by `alpha` and restart the fast weights from there.
pub struct Lookahead<O> {
    inner: O,
    sync_period: usize,
    alpha: f64,
    counter: usize,
    slow: Option<Vec<f64>>,
}

impl<O: Optimizer> Lookahead<O> {
    pub fn new(inner: O, sync_period: usize, alpha: f64) -> Self {
        Self {
            inner,
            sync_period: sync_period.max(1),
            alpha,
            counter: 0,
            slow: None,
        }
    }
}

impl<O: Optimizer> Optimizer for Lookahead<O> {
    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        let slow = self.slow.get_or_insert_with(|| params.to_vec());
        self.inner.step(params, grads);
        self.counter += 1;
        if self.counter.is_multiple_of(self.sync_period) {
            for (s, p) in slow.iter_mut().zip(params.iter_mut()) {
                *s += self.alpha * (*p - *s);
                *p = *s;
            }
        }
    }

    fn name(&self) -> &'static str {
        "ranger"
    }
}

/// Scale all gradient groups together so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(groups: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let sq: f64 = groups.iter().flat_map(|g| g.iter()).map(|v| v * v).sum();
    let norm = math::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let f = max_norm / norm;
        for g in groups.iter_mut() {
            for v in g.iter_mut() {
                *v *= f;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn minimise(spec: OptimizerSpec, lr: f64) -> f64 {
        // f(x) = Σ (x_k − k)²
        let mut x = vec![5.0, -3.0, 0.5];
        let mut opt = spec.build(lr, x.len());
        for _ in 0..3000 {
            let g: Vec<f64> = x.iter().enumerate().map(|(k, v)| 2.0 * (v - k as f64)).collect();
            opt.step(&mut x, &g);
        }
        x.iter().enumerate().map(|(k, v)| (v - k as f64).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn every_optimiser_solves_a_quadratic() {
        assert!(minimise(OptimizerSpec::Sgd { momentum: 0.5 }, 0.05) < 1e-6);
        assert!(minimise(OptimizerSpec::default(), 0.05) < 1e-3);
        assert!(minimise(OptimizerSpec::ranger(), 0.05) < 1e-3);
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        let mut x = vec![1.0, 1.0];
        let mut opt = OptimizerSpec::default().build(0.1, 2);
        opt.step(&mut x, &[3.0, -0.01]);
        assert!((x[0] - 0.9).abs() < 1e-6);
        assert!((x[1] - 1.1).abs() < 1e-4);
    }

    #[test]
    fn clipping_preserves_direction() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let n = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        assert!((a[0] - 0.6).abs() < 1e-15 && (b[0] - 0.8).abs() < 1e-15);
        let n = clip_global_norm(&mut [&mut a, &mut b], 10.0);
        assert!((n - 1.0).abs() < 1e-15);
        assert!((a[0] - 0.6).abs() < 1e-15);
    }
}
