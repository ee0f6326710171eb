//! Clustered synthetic demand panels with a known graph structure.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Covariates, PanelDataset, Timeline, TimelineKind};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_articles: usize,
    pub n_clusters: usize,
    pub n_weeks: usize,
    pub noise_sd: f64,
    pub seed: u64,
    /// AR(1) coefficient of each cluster factor.
    pub ar_coef: f64,
    pub innovation_sd: f64,
    /// Standard deviation of the fixed per-article offsets.
    pub offset_sd: f64,
    /// Known-covariate weeks generated past the end of the panel.
    pub future_weeks: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_articles: 60,
            n_clusters: 12,
            n_weeks: 80,
            noise_sd: 0.5,
            seed: 7,
            ar_coef: 0.9,
            innovation_sd: 0.5,
            offset_sd: 0.3,
            future_weeks: 4,
        }
    }
}

pub struct SyntheticPanel {
    pub data: PanelDataset,
    /// Cluster of each article.
    pub labels: Vec<usize>,
}

/// Article `i` belongs to cluster `i mod n_clusters`. Each cluster follows a
/// latent AR(1) factor around its own level; member demand is
/// softplus(factor + offset + noise). Static features are the cluster one-hot
/// plus a small uniform perturbation; known covariates are week-of-year
/// sinusoids.
pub fn generate_synthetic_panel(spec: &SyntheticSpec) -> Result<SyntheticPanel> {
    let (n, c, t) = (spec.n_articles, spec.n_clusters, spec.n_weeks);
    if c == 0 || c > n || t == 0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "need 1 <= n_clusters <= n_articles and n_weeks >= 1 (got {c}, {n}, {t})"
        )));
    }
    if !(spec.noise_sd >= 0.0 && spec.innovation_sd >= 0.0 && spec.offset_sd >= 0.0) {
        return Err(Error::InvalidArgument("standard deviations must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");

    let mut factors = alloc::vec![0.0; c * t];
    for k in 0..c {
        let level = rng.gen_range(1.0..4.0);
        let stationary_sd = spec.innovation_sd / math::sqrt((1.0 - spec.ar_coef * spec.ar_coef).max(1e-6));
        let mut x = stationary_sd * std_normal.sample(&mut rng);
        for w in 0..t {
            factors[k * t + w] = level + x;
            x = spec.ar_coef * x + spec.innovation_sd * std_normal.sample(&mut rng);
        }
    }
    let offsets: Vec<f64> = (0..n).map(|_| spec.offset_sd * std_normal.sample(&mut rng)).collect();
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut demand = Vec::with_capacity(n * t);
    for i in 0..n {
        for w in 0..t {
            let eps = spec.noise_sd * std_normal.sample(&mut rng);
            demand.push(math::softplus(factors[labels[i] * t + w] + offsets[i] + eps));
        }
    }
    let mut static_features = alloc::vec![0.0; n * c];
    for i in 0..n {
        for k in 0..c {
            let base = if labels[i] == k { 1.0 } else { 0.0 };
            static_features[i * c + k] = base + rng.gen_range(0.0..0.02);
        }
    }
    let data = PanelDataset::new(
        (0..n).map(|i| alloc::format!("art{i:04}")).collect(),
        Timeline::regular(TimelineKind::Index, 1, t),
        demand,
        alloc::vec![true; n * t],
        static_features,
        c,
        spec.future_weeks,
    )?
    .with_covariates(Covariates::Seasonal);
    Ok(SyntheticPanel { data, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::cosine;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / libm::sqrt(saa * sbb)
    }

    #[test]
    fn same_seed_same_panel() {
        let s = SyntheticSpec::default();
        let a = generate_synthetic_panel(&s).unwrap();
        let b = generate_synthetic_panel(&s).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn noise_free_members_differ_by_offsets_only() {
        let s = SyntheticSpec {
            noise_sd: 0.0,
            offset_sd: 0.0,
            ..SyntheticSpec::default()
        };
        let p = generate_synthetic_panel(&s).unwrap();
        // with zero offsets, members of a cluster coincide
        assert_eq!(p.data.demand_row(0), p.data.demand_row(12));
        let s = SyntheticSpec {
            noise_sd: 0.0,
            ..SyntheticSpec::default()
        };
        let p = generate_synthetic_panel(&s).unwrap();
        // softplus⁻¹ of member demand differs by a constant
        let inv = |v: f64| math::softplus_inv(v);
        let d: Vec<f64> = p
            .data
            .demand_row(0)
            .iter()
            .zip(p.data.demand_row(12))
            .map(|(a, b)| inv(*a) - inv(*b))
            .collect();
        assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-9));
    }

    #[test]
    fn clusters_are_visible_in_features_and_demand() {
        let s = SyntheticSpec::default();
        let p = generate_synthetic_panel(&s).unwrap();
        let m = s.n_clusters;
        let (mut within, mut cross) = (Vec::new(), Vec::new());
        for i in 0..s.n_articles {
            for j in i + 1..s.n_articles {
                let cs = cosine(p.data.static_row(i), p.data.static_row(j));
                let r = pearson(p.data.demand_row(i), p.data.demand_row(j));
                if p.labels[i] == p.labels[j] {
                    assert!(cs > 0.95, "{cs}");
                    within.push(r);
                } else {
                    assert!(cs < 0.5, "{cs}");
                    cross.push(r);
                }
            }
        }
        assert_eq!(m, 12);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&within) > mean(&cross));
    }
}
