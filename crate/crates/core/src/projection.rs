//! Linear 2-D projection of embeddings onto their leading principal axes.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Leading eigenvector of a symmetric d × d matrix by power iteration.
fn leading_eigenvector(cov: &[f64], d: usize) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..d).map(|k| 1.0 + 0.01 * k as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let mut w = alloc::vec![0.0; d];
        for r in 0..d {
            w[r] = math::dot(&cov[r * d..(r + 1) * d], &v);
        }
        let n = math::norm(&w);
        if n == 0.0 {
            return (v, 0.0);
        }
        for x in &mut w {
            *x /= n;
        }
        let diff: f64 = w.iter().zip(&v).map(|(a, b)| math::abs(a - b)).sum();
        v = w;
        lambda = n;
        if diff < 1e-13 {
            break;
        }
    }
    // sign convention: largest-magnitude component positive
    let k = (0..d).max_by(|&a, &b| math::abs(v[a]).total_cmp(&math::abs(v[b]))).unwrap_or(0);
    if v.get(k).copied().unwrap_or(0.0) < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    (v, lambda)
}

/// Project `n` rows of width `d` onto their top two principal components.
/// Returns n × 2 coordinates row-major.
pub fn project_2d(rows: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 || !rows.len().is_multiple_of(d) {
        return Err(Error::Shape {
            expected: (rows.len() / d.max(1), d),
            got: (rows.len(), 1),
        });
    }
    let n = rows.len() / d;
    let mut mean = alloc::vec![0.0; d];
    for r in rows.chunks(d) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n.max(1) as f64;
        }
    }
    let centered: Vec<f64> = rows
        .chunks(d)
        .flat_map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect::<Vec<_>>())
        .collect();
    let mut cov = alloc::vec![0.0; d * d];
    for r in centered.chunks(d) {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += r[a] * r[b];
            }
        }
    }
    let (v1, l1) = leading_eigenvector(&cov, d);
    for a in 0..d {
        for b in 0..d {
            cov[a * d + b] -= l1 * v1[a] * v1[b];
        }
    }
    let (v2, _) = leading_eigenvector(&cov, d);
    let v2 = if d > 1 { v2 } else { alloc::vec![0.0] };
    Ok(centered
        .chunks(d)
        .flat_map(|r| [math::dot(r, &v1), math::dot(r, &v2)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_the_dominant_axis() {
        // points spread along (1, 1, 0) with small noise on the third axis
        let rows: Vec<f64> = (0..20)
            .flat_map(|k| {
                let t = k as f64 - 9.5;
                [t, t, 0.01 * ((k % 3) as f64 - 1.0)]
            })
            .collect();
        let p = project_2d(&rows, 3).unwrap();
        for k in 0..20 {
            let t = k as f64 - 9.5;
            assert!((p[2 * k] - t * 2f64.sqrt()).abs() < 1e-6);
            assert!(p[2 * k + 1].abs() < 0.02);
        }
    }

    #[test]
    fn is_deterministic() {
        let rows: Vec<f64> = (0..40).map(|k| ((k * 7919) % 23) as f64).collect();
        assert_eq!(project_2d(&rows, 4).unwrap(), project_2d(&rows, 4).unwrap());
        assert!(project_2d(&rows, 3).is_err());
    }
}
