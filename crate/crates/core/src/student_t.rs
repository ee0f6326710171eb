//! Location-scale Student-t likelihood.

use alloc::format;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

/// Distribution parameters for one forecast step, in demand units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TStudentParams {
    mu: f64,
    scale: f64,
    dof: f64,
}

impl TStudentParams {
    /// Requires a finite location, `scale > 0` and `dof > 2`.
    pub fn new(mu: f64, scale: f64, dof: f64) -> Result<Self> {
        if !mu.is_finite() || !(scale > 0.0 && scale.is_finite()) || !(dof > 2.0) {
            return Err(Error::StudentT(format!(
                "need finite mu, scale > 0 and dof > 2 (got mu={mu}, scale={scale}, dof={dof})"
            )));
        }
        Ok(Self { mu, scale, dof })
    }

    /// Skips validation; callers guarantee the invariants by construction.
    pub(crate) fn new_unchecked(mu: f64, scale: f64, dof: f64) -> Self {
        Self { mu, scale, dof }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// s² ν / (ν − 2).
    pub fn variance(&self) -> f64 {
        self.scale * self.scale * self.dof / (self.dof - 2.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = rand_distr::StudentT::new(self.dof)
            .expect("dof > 2")
            .sample(rng);
        self.mu + self.scale * t
    }
}

/// Negative log density of `y`.
pub fn t_nll(params: &TStudentParams, y: f64) -> f64 {
    let (nu, mu, s) = (params.dof, params.mu, params.scale);
    let z = (y - mu) / s;
    -math::ln_gamma(0.5 * (nu + 1.0)) + math::ln_gamma(0.5 * nu) + 0.5 * math::ln(nu * core::f64::consts::PI)
        + math::ln(s)
        + 0.5 * (nu + 1.0) * math::ln_1p(z * z / nu)
}

/// Partial derivatives of [`t_nll`] with respect to (μ, s, ν).
pub fn t_nll_grad(params: &TStudentParams, y: f64) -> (f64, f64, f64) {
    let (nu, mu, s) = (params.dof, params.mu, params.scale);
    let z = (y - mu) / s;
    let q = 1.0 + z * z / nu;
    let d_mu = -(nu + 1.0) * z / (nu * s * q);
    let d_s = 1.0 / s - (nu + 1.0) * z * z / (nu * s * q);
    let d_nu = -0.5 * math::digamma(0.5 * (nu + 1.0)) + 0.5 * math::digamma(0.5 * nu) + 0.5 / nu
        + 0.5 * math::ln_1p(z * z / nu)
        - 0.5 * (nu + 1.0) * z * z / (nu * nu * q);
    (d_mu, d_s, d_nu)
}

/// Weights for under- and over-prediction. (1, 1) is the plain likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub under: f64,
    pub over: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { under: 1.0, over: 1.0 }
    }
}

impl LossWeights {
    pub fn new(under: f64, over: f64) -> Result<Self> {
        if !(under > 0.0 && over > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be positive (got {under}, {over})"
            )));
        }
        Ok(Self { under, over })
    }

    /// `under` when the model under-predicts (y > μ), `over` when y < μ,
    /// 1 on a tie.
    pub fn weight(&self, params: &TStudentParams, y: f64) -> f64 {
        if y > params.mu {
            self.under
        } else if y < params.mu {
            self.over
        } else {
            1.0
        }
    }
}

pub fn asymmetric_t_nll(params: &TStudentParams, y: f64, weights: &LossWeights) -> f64 {
    weights.weight(params, y) * t_nll(params, y)
}
