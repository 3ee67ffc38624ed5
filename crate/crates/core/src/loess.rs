//! Weighted local polynomial regression evaluated at a single target point.
//!
//! Weights combine the tricube distance kernel with inverse-variance
//! weights, and the standard error is propagated through the equivalent
//! kernel: `se² = Σ lⱼ² varⱼ`, where `l` is the hat row at the target.

use serde::{Deserialize, Serialize};

use crate::error::{CgemError, Result};
use crate::linalg::solve_spd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoessConfig {
    pub span: f64,
    pub degree: usize,
    pub variance_floor: f64,
}

impl Default for LoessConfig {
    fn default() -> Self {
        LoessConfig {
            span: 0.75,
            degree: 2,
            variance_floor: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoessFit {
    pub estimate: f64,
    pub se: f64,
    /// Span actually used (widened once when the first design is singular).
    pub span: f64,
    /// Equivalent-kernel row: `estimate = Σ hat[j] · values[j]`.
    pub hat: Vec<f64>,
}

pub fn tricube(t: f64) -> f64 {
    let t = t.abs();
    if t >= 1.0 {
        0.0
    } else {
        let c = 1.0 - t * t * t;
        c * c * c
    }
}

/// Number of coefficients of a full polynomial of `degree` in `d` variables.
pub fn n_terms(d: usize, degree: usize) -> usize {
    match d {
        1 => degree + 1,
        _ => (degree + 1) * (degree + 2) / 2,
    }
}

fn basis(t: &[f64], degree: usize, out: &mut Vec<f64>) {
    out.clear();
    match t {
        [a] => {
            let mut p = 1.0;
            for _ in 0..=degree {
                out.push(p);
                p *= a;
            }
        }
        [a, b] => {
            for total in 0..=degree {
                for pb in 0..=total {
                    out.push(a.powi((total - pb) as i32) * b.powi(pb as i32));
                }
            }
        }
        _ => unreachable!("covariate dimension is 1 or 2"),
    }
}

/// Fits at `z0` from `(points[j], values[j])` with pointwise variances.
///
/// Coordinates are scaled by their standard deviation across `points`
/// before distances are taken, so the neighbourhood does not depend on the
/// units of each covariate.
pub fn loess_fit_at(
    points: &[Vec<f64>],
    values: &[f64],
    variances: &[f64],
    z0: &[f64],
    cfg: &LoessConfig,
) -> Result<LoessFit> {
    let m = points.len();
    if m == 0 || values.len() != m || variances.len() != m {
        return Err(CgemError::Inference(format!(
            "loess inputs disagree in length: {} points, {} values, {} variances",
            m,
            values.len(),
            variances.len()
        )));
    }
    if !(cfg.span > 0.0 && cfg.span <= 1.0) {
        return Err(CgemError::Config(format!(
            "span must lie in (0, 1], got {}",
            cfg.span
        )));
    }
    let d = z0.len();
    if points.iter().any(|p| p.len() != d) || !(1..=2).contains(&d) {
        return Err(CgemError::Inference("loess point dimension mismatch".into()));
    }
    let scales: Vec<f64> = (0..d)
        .map(|k| {
            let col: Vec<f64> = points.iter().map(|p| p[k]).collect();
            let s = crate::data::mean_sd(&col).1;
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    let scaled: Vec<Vec<f64>> = points
        .iter()
        .map(|p| (0..d).map(|k| (p[k] - z0[k]) / scales[k]).collect())
        .collect();

    fit_with_span(&scaled, values, variances, cfg.span, cfg)
        .or_else(|| fit_with_span(&scaled, values, variances, cfg.span * 1.5, cfg))
        .ok_or_else(|| {
            CgemError::Inference(format!(
                "local design is singular at z0 = {z0:?} even after widening the span"
            ))
        })
}

fn fit_with_span(
    diffs: &[Vec<f64>],
    values: &[f64],
    variances: &[f64],
    span: f64,
    cfg: &LoessConfig,
) -> Option<LoessFit> {
    let m = diffs.len();
    let d = diffs[0].len();
    let dist: Vec<f64> = diffs
        .iter()
        .map(|t| t.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let radius = if span <= 1.0 {
        let q = ((span * m as f64).ceil() as usize).clamp(1, m);
        sorted[q - 1]
    } else {
        // Beyond the full sample, stretch the largest distance.
        sorted[m - 1] * span.powf(1.0 / d as f64)
    };
    if !(radius > 0.0) {
        return None;
    }

    let p = n_terms(d, cfg.degree);
    let mut omega = vec![0.0; m];
    for j in 0..m {
        let w = tricube(dist[j] / radius);
        if w > 0.0 {
            omega[j] = w / variances[j].max(cfg.variance_floor);
        }
    }
    let active = omega.iter().filter(|w| **w > 0.0).count();
    if active < p.max(cfg.degree + 2) {
        return None;
    }

    let mut phis = vec![Vec::new(); m];
    let mut gram = vec![0.0; p * p];
    for j in 0..m {
        if omega[j] == 0.0 {
            continue;
        }
        let t: Vec<f64> = diffs[j].iter().map(|v| v / radius).collect();
        basis(&t, cfg.degree, &mut phis[j]);
        for s in 0..p {
            for r in 0..p {
                gram[s * p + r] += omega[j] * phis[j][s] * phis[j][r];
            }
        }
    }
    let mut e1 = vec![0.0; p];
    e1[0] = 1.0;
    let a = solve_spd(&gram, &e1, p)?;
    let hat: Vec<f64> = (0..m)
        .map(|j| {
            if omega[j] == 0.0 {
                0.0
            } else {
                omega[j] * phis[j].iter().zip(&a).map(|(f, c)| f * c).sum::<f64>()
            }
        })
        .collect();
    let estimate = hat.iter().zip(values).map(|(l, v)| l * v).sum();
    let var: f64 = hat.iter().zip(variances).map(|(l, v)| l * l * v).sum();
    Some(LoessFit {
        estimate,
        se: var.max(0.0).sqrt(),
        span,
        hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|j| vec![-1.0 + 2.0 * j as f64 / (m - 1) as f64]).collect()
    }

    fn grid_2d(k: usize) -> Vec<Vec<f64>> {
        let mut g = Vec::new();
        for a in 0..k {
            for b in 0..k {
                g.push(vec![a as f64 / (k - 1) as f64 * 3.0, 0.2 + b as f64 * 0.05]);
            }
        }
        g
    }

    #[test]
    fn reproduces_quadratics() {
        let pts = grid_1d(41);
        let f = |z: &[f64]| 1.3 - 0.7 * z[0] + 2.1 * z[0] * z[0];
        let vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
        let vars = vec![0.01; pts.len()];
        for z0 in [pts[0].clone(), pts[17].clone(), vec![0.333]] {
            let fit = loess_fit_at(&pts, &vals, &vars, &z0, &LoessConfig::default()).unwrap();
            assert!((fit.estimate - f(&z0)).abs() < 1e-8);
        }

        let pts = grid_2d(8);
        let g = |z: &[f64]| 0.5 + z[0] - 3.0 * z[1] + 0.4 * z[0] * z[0] - 2.0 * z[0] * z[1] + 7.0 * z[1] * z[1];
        let vals: Vec<f64> = pts.iter().map(|p| g(p)).collect();
        let vars: Vec<f64> = (0..pts.len()).map(|j| 0.01 + 0.001 * j as f64).collect();
        for j in [0, 9, 35, 63] {
            let fit = loess_fit_at(&pts, &vals, &vars, &pts[j], &LoessConfig::default()).unwrap();
            assert!((fit.estimate - g(&pts[j])).abs() < 1e-8, "{j}");
        }
    }

    #[test]
    fn zero_variance_gives_zero_se() {
        let pts = grid_1d(30);
        let vals: Vec<f64> = pts.iter().map(|p| p[0].sin()).collect();
        let fit = loess_fit_at(&pts, &vals, &vec![0.0; 30], &pts[4], &LoessConfig::default())
            .unwrap();
        assert_eq!(fit.se, 0.0);
    }

    #[test]
    fn variance_scaling_is_homogeneous() {
        let pts = grid_2d(7);
        let vals: Vec<f64> = pts.iter().map(|p| (p[0] * p[1]).cos()).collect();
        let vars: Vec<f64> = (0..pts.len()).map(|j| 0.02 + 0.01 * (j % 5) as f64).collect();
        let base = loess_fit_at(&pts, &vals, &vars, &pts[10], &LoessConfig::default()).unwrap();
        let k = 3.7;
        let scaled: Vec<f64> = vars.iter().map(|v| v * k).collect();
        let fit = loess_fit_at(&pts, &vals, &scaled, &pts[10], &LoessConfig::default()).unwrap();
        assert!((fit.estimate - base.estimate).abs() < 1e-12);
        assert!((fit.se * fit.se / (base.se * base.se) - k).abs() < 1e-10);
    }

    #[test]
    fn hat_row_reproduces_constants() {
        let pts = grid_1d(25);
        let fit = loess_fit_at(&pts, &[0.0; 25], &[1.0; 25], &[0.1], &LoessConfig::default())
            .unwrap();
        assert!((fit.hat.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn too_few_points_widen_then_fail() {
        let pts = grid_1d(5);
        let vals = vec![1.0; 5];
        let cfg = LoessConfig {
            span: 0.6,
            ..Default::default()
        };
        // 3 points in the window is below degree + 2, the widened span has 5
        let fit = loess_fit_at(&pts, &vals, &[1.0; 5], &pts[0], &cfg).unwrap();
        assert!((fit.span - 0.9).abs() < 1e-12);

        let pts = grid_1d(3);
        let err = loess_fit_at(&pts, &[1.0; 3], &[1.0; 3], &pts[0], &LoessConfig::default())
            .unwrap_err();
        assert!(matches!(err, CgemError::Inference(_)));
    }

    #[test]
    fn tricube_shape() {
        assert_eq!(tricube(0.0), 1.0);
        assert_eq!(tricube(1.0), 0.0);
        assert_eq!(tricube(-0.5), tricube(0.5));
        assert!((tricube(0.5) - (1.0f64 - 0.125).powi(3)).abs() < 1e-15);
    }
}
