//! Entropy-based IGCI on covariate-adjusted residuals.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use crate::data::{mean_sd, Covariates, MIN_ROWS};
use crate::error::{CgemError, Result};
use crate::kernels::gauss_unchecked;
use crate::linalg::solve_spd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "x->y")]
    XToY,
    #[serde(rename = "y->x")]
    YToX,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgciVerdict {
    pub direction: Direction,
    pub h_x: f64,
    pub h_y: f64,
}

/// Residuals of `v` after a local-linear Gaussian-kernel regression on `z`,
/// with per-column bandwidths `0.9 sd n^{-1/(4+d)}`.
pub fn local_linear_residuals(v: &[f64], z: &Covariates) -> Result<Vec<f64>> {
    let n = v.len();
    let d = z.dim();
    let p = d + 1;
    let bw: Vec<f64> = (0..d)
        .map(|k| 0.9 * mean_sd(&z.column(k)).1 * (n as f64).powf(-1.0 / (4.0 + d as f64)))
        .collect();
    if bw.iter().any(|b| !(*b > 0.0)) {
        return Err(CgemError::Data("covariate column has zero variance".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut phi = vec![0.0; p];
    for i in 0..n {
        let zi = z.row(i);
        gram.iter_mut().for_each(|g| *g = 0.0);
        rhs.iter_mut().for_each(|r| *r = 0.0);
        for j in 0..n {
            let zj = z.row(j);
            let mut w = 1.0;
            phi[0] = 1.0;
            for k in 0..d {
                let u = zj[k] - zi[k];
                w *= gauss_unchecked(u, bw[k]);
                phi[k + 1] = u / bw[k];
            }
            for s in 0..p {
                rhs[s] += w * phi[s] * v[j];
                for r in 0..p {
                    gram[s * p + r] += w * phi[s] * phi[r];
                }
            }
        }
        let fitted = match solve_spd(&gram, &rhs, p) {
            Some(beta) => beta[0],
            // Too few neighbours for a slope: fall back to the local mean.
            None => rhs[0] / gram[0],
        };
        out.push(v[i] - fitted);
    }
    Ok(out)
}

fn rescale_unit(v: &[f64], stage: &'static str) -> Result<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-12 * (1.0 + lo.abs())) {
        return Err(CgemError::DegenerateDensity { z: vec![] }.at(stage));
    }
    Ok(v.iter().map(|t| (t - lo) / (hi - lo)).collect())
}

/// Spacing estimate `ψ(n) - ψ(1) + mean ln|v(i+1) - v(i)|` over sorted
/// values; ties are skipped.
pub fn spacing_entropy(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mut sum = 0.0;
    for w in s.windows(2) {
        let dlt = w[1] - w[0];
        if dlt > 0.0 {
            sum += dlt.ln();
        }
    }
    digamma(n as f64) - digamma(1.0) + sum / (n - 1) as f64
}

/// Declares `X → Y` when the rescaled X residual carries more entropy than
/// the rescaled Y residual.
pub fn igci_adjusted(x: &[f64], y: &[f64], z: &Covariates) -> Result<IgciVerdict> {
    let n = x.len();
    if n < MIN_ROWS {
        return Err(CgemError::InsufficientData {
            found: n,
            required: MIN_ROWS,
        });
    }
    if y.len() != n || z.nrows() != n {
        return Err(CgemError::Data("x, y and z row counts differ".into()));
    }
    let rx = rescale_unit(&local_linear_residuals(x, z)?, "igci residual x")?;
    let ry = rescale_unit(&local_linear_residuals(y, z)?, "igci residual y")?;
    let (h_x, h_y) = (spacing_entropy(&rx), spacing_entropy(&ry));
    Ok(IgciVerdict {
        direction: if h_x > h_y {
            Direction::XToY
        } else {
            Direction::YToX
        },
        h_x,
        h_y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_entropy_of_uniform_grid() {
        // Evenly spaced points on [0, 1]: every spacing is 1/(n-1).
        let n = 1001;
        let v: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let expected = digamma(n as f64) - digamma(1.0) - ((n - 1) as f64).ln();
        assert!((spacing_entropy(&v) - expected).abs() < 1e-10);
        assert!(spacing_entropy(&v).abs() < 0.6);
    }

    #[test]
    fn residuals_remove_linear_trend() {
        let n = 200;
        let zc: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let v: Vec<f64> = zc.iter().map(|t| 3.0 * t - 1.0).collect();
        let r = local_linear_residuals(&v, &Covariates::from_column(zc)).unwrap();
        assert!(r.iter().all(|e| e.abs() < 1e-8));
    }

    #[test]
    fn swapping_flips_verdict() {
        let n = 300;
        let z = Covariates::from_column((0..n).map(|i| ((i * 7919) % n) as f64 / n as f64).collect());
        let x: Vec<f64> = (0..n).map(|i| ((i * 104_729) % 997) as f64 / 997.0).collect();
        let y: Vec<f64> = x.iter().map(|t| t.powi(3)).collect();
        let a = igci_adjusted(&x, &y, &z).unwrap();
        let b = igci_adjusted(&y, &x, &z).unwrap();
        assert_ne!(a.direction, b.direction);
        assert_eq!(a.h_x, b.h_y);
    }

    #[test]
    fn constant_residual_is_degenerate() {
        let n = 40;
        let z = Covariates::from_column((0..n).map(|i| i as f64).collect());
        let x = vec![1.0; n];
        let y: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let err = igci_adjusted(&x, &y, &z).unwrap_err();
        assert!(matches!(err.root(), CgemError::DegenerateDensity { .. }));
    }
}
