//! Kernel conditional density estimation with a locally fitted log-linear
//! model.
//!
//! For a query `(x, z)` the estimator minimizes
//!
//! ```text
//! R(θ) = Σᵢ { K_b(Xᵢ - x) - exp(θ₀ + θ₁'(Zᵢ - z)) }² W_h(Zᵢ - z)
//! ```
//!
//! and reports `exp(θ̂₀)`. The exponential link keeps every estimate
//! nonnegative. Curves over `x` are rescaled to integrate to one on a
//! uniform grid.

use serde::{Deserialize, Serialize};

use crate::data::{mean_sd, Covariates};
use crate::error::{CgemError, Result};
use crate::kernels::{gauss_unchecked, Bandwidths, CovariateScale, INV_SQRT_2PI};
use crate::linalg::solve_spd;

/// Density floor used wherever a logarithm of an estimate is taken.
pub const CLAMP_FLOOR: f64 = 1e-12;

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Grid half-margin beyond the training range, in units of `b`.
pub const GRID_MARGIN: f64 = 3.0;

pub const GN_MAX_ITER: usize = 50;
pub const GN_GRAD_TOL: f64 = 1e-8;

/// `ln(1e-300)`: below this every covariate weight is treated as zero.
const MIN_LOG_WEIGHT: f64 = -690.775_527_898_213_7;

/// Weights below this fraction of the largest one are dropped from the
/// local fit; their contribution is under double-precision resolution.
const RELATIVE_WEIGHT_CUTOFF: f64 = 1e-17;

/// Largest accepted `‖θ₁‖`, the change in log density per covariate
/// bandwidth. Steeper fits fall back to the locally constant estimate.
pub const MAX_LOG_SLOPE: f64 = 3.0;

/// Iterations stop once `‖θ₁‖` passes this.
const RUNAWAY_SLOPE: f64 = 4.0 * MAX_LOG_SLOPE;

/// A fitted conditional density estimator. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CondDensityModel {
    train_x: Vec<f64>,
    train_z: Covariates,
    bw: Bandwidths,
    scale: CovariateScale,
    clamp_floor: f64,
    x_grid: Vec<f64>,
}

/// Fits with the default 512-point normalization grid.
pub fn fit_kcde(x: &[f64], z: &Covariates, bw: Bandwidths) -> Result<CondDensityModel> {
    CondDensityModel::fit(x, z, bw, DEFAULT_GRID_POINTS)
}

impl CondDensityModel {
    pub fn fit(x: &[f64], z: &Covariates, bw: Bandwidths, grid_points: usize) -> Result<Self> {
        Bandwidths::new(bw.b, bw.h)?;
        if x.is_empty() {
            return Err(CgemError::Data("empty training set".into()));
        }
        if z.nrows() != x.len() {
            return Err(CgemError::Data(format!(
                "training lengths differ: x={}, z={}",
                x.len(),
                z.nrows()
            )));
        }
        if grid_points < 3 {
            return Err(CgemError::Config(format!(
                "density grid needs at least 3 points, got {grid_points}"
            )));
        }
        if x.iter().chain(z.as_slice()).any(|v| !v.is_finite()) {
            return Err(CgemError::Data("non-finite training value".into()));
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min) - GRID_MARGIN * bw.b;
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) + GRID_MARGIN * bw.b;
        let step = (hi - lo) / (grid_points - 1) as f64;
        let mut x_grid: Vec<f64> = (0..grid_points).map(|i| lo + i as f64 * step).collect();
        x_grid[grid_points - 1] = hi;

        Ok(CondDensityModel {
            train_x: x.to_vec(),
            train_z: z.clone(),
            bw,
            scale: model_scale(z),
            clamp_floor: CLAMP_FLOOR,
            x_grid,
        })
    }

    pub fn bandwidths(&self) -> Bandwidths {
        self.bw
    }

    pub fn clamp_floor(&self) -> f64 {
        self.clamp_floor
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn dim(&self) -> usize {
        self.train_z.dim()
    }

    pub fn n_train(&self) -> usize {
        self.train_x.len()
    }

    /// `ln W_h(zi - z)` on the model's covariate scale.
    pub fn log_weight(&self, zi: &[f64], z: &[f64]) -> f64 {
        let h = self.bw.h;
        let d = zi.len() as f64;
        -0.5 * self.scale.dist2(zi, z) / (h * h) + d * (INV_SQRT_2PI / h).ln()
    }

    /// `exp(θ̂₀)` of the local log-linear fit at `(x, z)`. Falls back to the
    /// locally constant estimate when Gauss–Newton fails.
    pub fn raw_density(&self, x: f64, z: &[f64]) -> Result<f64> {
        let local = self.local_fit(z)?;
        Ok(local.raw(&self.train_x, x, self.bw.b, self.clamp_floor))
    }

    /// Locally constant (Nadaraya–Watson) estimate `Σ W K / Σ W`.
    pub fn nadaraya_watson(&self, x: f64, z: &[f64]) -> Result<f64> {
        let local = self.local_fit(z)?;
        Ok(local.nw(&self.train_x, x, self.bw.b))
    }

    /// Raw estimates over the grid, rescaled by their trapezoid integral and
    /// floored at `clamp_floor`.
    pub fn normalized_density(&self, z: &[f64]) -> Result<DensityCurve> {
        let local = self.local_fit(z)?;
        let raw: Vec<f64> = self
            .x_grid
            .iter()
            .map(|&x| local.raw(&self.train_x, x, self.bw.b, self.clamp_floor))
            .collect();
        DensityCurve::normalize(&self.x_grid, raw, self.clamp_floor)
            .ok_or_else(|| CgemError::DegenerateDensity { z: z.to_vec() })
    }

    /// `ln f̂(x | z)` read off the normalized curve.
    pub fn log_density_at(&self, x: f64, z: &[f64]) -> Result<f64> {
        Ok(self.normalized_density(z)?.log_at(x))
    }

    fn local_fit(&self, z: &[f64]) -> Result<LocalFit> {
        if z.len() != self.dim() || z.iter().any(|v| !v.is_finite()) {
            return Err(CgemError::Parameter(format!(
                "query z = {z:?} does not match covariate dimension {}",
                self.dim()
            )));
        }
        let h = self.bw.h;
        let d = self.dim();
        let logw: Vec<f64> = self
            .train_z
            .rows()
            .map(|zi| self.log_weight(zi, z))
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max < MIN_LOG_WEIGHT {
            return Err(CgemError::Extrapolation { z: z.to_vec() });
        }
        let cutoff = max + RELATIVE_WEIGHT_CUTOFF.ln();
        let mut idx = Vec::new();
        let mut w = Vec::new();
        let mut u = [Vec::new(), Vec::new()];
        for (i, lw) in logw.iter().enumerate() {
            if *lw < cutoff {
                continue;
            }
            idx.push(i);
            w.push((lw - max).exp());
            let zi = self.train_z.row(i);
            for (k, col) in u.iter_mut().enumerate() {
                col.push(if k < d {
                    self.scale.factors[k] * (zi[k] - z[k]) / h
                } else {
                    0.0
                });
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Ok(LocalFit { idx, w, u, d })
    }
}

fn model_scale(z: &Covariates) -> CovariateScale {
    CovariateScale::from_data(z).unwrap_or_else(|_| {
        // Constant covariate columns: fall back to raw units.
        let sds: Vec<f64> = (0..z.dim()).map(|k| mean_sd(&z.column(k)).1).collect();
        let finite: Vec<f64> = sds.into_iter().filter(|s| *s > 0.0 && s.is_finite()).collect();
        CovariateScale {
            factors: vec![1.0; z.dim()],
            mean_sd: if finite.is_empty() {
                1.0
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            },
        }
    })
}

/// Normalized covariate weights and scaled differences for one query `z`.
struct LocalFit {
    idx: Vec<usize>,
    w: Vec<f64>,
    /// `(Zᵢ - z) / h` after column scaling, one vector per covariate; the
    /// second is all zeros when `d = 1`.
    u: [Vec<f64>; 2],
    d: usize,
}

impl LocalFit {
    fn kernel_values(&self, train_x: &[f64], x: f64, b: f64) -> Vec<f64> {
        self.idx
            .iter()
            .map(|&i| gauss_unchecked(train_x[i] - x, b))
            .collect()
    }

    fn nw(&self, train_x: &[f64], x: f64, b: f64) -> f64 {
        self.kernel_values(train_x, x, b)
            .iter()
            .zip(&self.w)
            .map(|(k, w)| k * w)
            .sum()
    }

    fn raw(&self, train_x: &[f64], x: f64, b: f64, floor: f64) -> f64 {
        let k = self.kernel_values(train_x, x, b);
        let nw: f64 = k.iter().zip(&self.w).map(|(k, w)| k * w).sum();
        // The target E[K_b(X - x) | z] never exceeds K_b(0); a fit above it
        // is a runaway extrapolation of the exponential link.
        let cap = INV_SQRT_2PI / b;
        match self.gauss_newton(&k, nw.max(floor).ln()) {
            Some(theta) if !self.too_steep(&theta) => {
                let v = theta[0].exp();
                if v.is_finite() && v <= cap {
                    v
                } else {
                    nw
                }
            }
            _ => nw,
        }
    }

    /// True when the fitted log-slope exceeds `MAX_LOG_SLOPE` per
    /// bandwidth, i.e. the surface has collapsed onto a few neighbours.
    fn too_steep(&self, theta: &[f64; 3]) -> bool {
        self.slope2(theta) > MAX_LOG_SLOPE * MAX_LOG_SLOPE
    }

    fn slope2(&self, theta: &[f64; 3]) -> f64 {
        theta[1..=self.d].iter().map(|t| t * t).sum()
    }

    /// Fills `a` with `exp(θ₀ + θ₁'uᵢ)` and returns the loss.
    fn loss(&self, k: &[f64], theta: &[f64; 3], a: &mut [f64]) -> f64 {
        let (u1, u2) = (&self.u[0], &self.u[1]);
        let mut loss = 0.0;
        for i in 0..a.len() {
            let ai = (theta[0] + theta[1] * u1[i] + theta[2] * u2[i]).exp();
            a[i] = ai;
            let r = k[i] - ai;
            loss += self.w[i] * r * r;
        }
        loss
    }

    /// Half-gradient `Σ w r A φ`, Gauss–Newton matrix `Σ w A² φφ'` and
    /// residual curvature `Σ w r A φφ'` with `φ = (1, u)`, from the fitted
    /// values `a`.
    fn derivatives(&self, k: &[f64], a: &[f64]) -> ([f64; 3], [[f64; 3]; 3], [[f64; 3]; 3]) {
        let (u1, u2) = (&self.u[0], &self.u[1]);
        let mut s = [0.0; 9];
        let mut c = [0.0; 5];
        for i in 0..a.len() {
            let (ui1, ui2) = (u1[i], u2[i]);
            let wra = self.w[i] * (k[i] - a[i]) * a[i];
            let waa = self.w[i] * a[i] * a[i];
            s[0] += wra;
            s[1] += wra * ui1;
            s[2] += wra * ui2;
            s[3] += waa;
            s[4] += waa * ui1;
            s[5] += waa * ui2;
            s[6] += waa * ui1 * ui1;
            s[7] += waa * ui1 * ui2;
            s[8] += waa * ui2 * ui2;
            c[0] += wra * ui1 * ui1;
            c[1] += wra * ui1 * ui2;
            c[2] += wra * ui2 * ui2;
        }
        let g = [s[0], s[1], s[2]];
        let h = [[s[3], s[4], s[5]], [s[4], s[6], s[7]], [s[5], s[7], s[8]]];
        let r = [[s[0], s[1], s[2]], [s[1], c[0], c[1]], [s[2], c[1], c[2]]];
        (g, h, r)
    }

    /// Returns `θ̂`, or `None` when the iteration breaks down.
    fn gauss_newton(&self, k: &[f64], theta0: f64) -> Option<[f64; 3]> {
        let p = self.d + 1;
        let mut theta = [theta0, 0.0, 0.0];
        let mut a = vec![0.0; k.len()];
        let mut trial_a = vec![0.0; k.len()];
        let mut loss = self.loss(k, &theta, &mut a);
        if !loss.is_finite() {
            return None;
        }
        let (mut g, mut h, mut r) = self.derivatives(k, &a);
        for _ in 0..GN_MAX_ITER {
            let grad_norm = 2.0 * g[..p].iter().map(|v| v * v).sum::<f64>().sqrt();
            if grad_norm <= GN_GRAD_TOL {
                return Some(theta);
            }
            let mut hm = [0.0; 9];
            let mut full = [0.0; 9];
            for s in 0..p {
                for t in 0..p {
                    hm[s * p + t] = h[s][t];
                    full[s * p + t] = h[s][t] - r[s][t];
                }
            }
            // Newton's direction where the loss is locally convex, the
            // Gauss–Newton one elsewhere.
            let newton = solve_spd(&full[..p * p], &g[..p], p);
            let delta = match newton.or_else(|| solve_spd(&hm[..p * p], &g[..p], p)) {
                Some(d) => d,
                // Covariates carry no spread around z: fit the intercept alone.
                None if h[0][0] > 0.0 && g[1..p].iter().all(|v| v.abs() <= GN_GRAD_TOL) => {
                    let mut d = vec![0.0; p];
                    d[0] = g[0] / h[0][0];
                    d
                }
                None => return None,
            };
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let mut trial = theta;
                for s in 0..p {
                    trial[s] += step * delta[s];
                }
                let l2 = self.loss(k, &trial, &mut trial_a);
                if l2.is_finite() && l2 <= loss {
                    let moved = (0..p)
                        .map(|s| (trial[s] - theta[s]).abs())
                        .fold(0.0, f64::max);
                    theta = trial;
                    loss = l2;
                    std::mem::swap(&mut a, &mut trial_a);
                    (g, h, r) = self.derivatives(k, &a);
                    accepted = true;
                    // Far past the slope cap the fit is discarded anyway.
                    if self.slope2(&theta) > RUNAWAY_SLOPE * RUNAWAY_SLOPE {
                        return Some(theta);
                    }
                    if moved <= 1e-12 * (1.0 + theta[0].abs()) {
                        return Some(theta);
                    }
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No descent left along the Gauss–Newton direction.
                return Some(theta);
            }
        }
        Some(theta)
    }
}

/// A density curve on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub floor: f64,
}

impl DensityCurve {
    /// Rescales `raw` to unit trapezoid integral, then floors at `floor`
    /// and rescales once more. Returns `None` when nothing sits above the
    /// floor.
    pub fn normalize(x: &[f64], raw: Vec<f64>, floor: f64) -> Option<DensityCurve> {
        if raw.iter().all(|&v| !(v > floor)) {
            return None;
        }
        let mut f = raw;
        let total = trapezoid(x, &f);
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        f.iter_mut().for_each(|v| *v /= total);
        if f.iter().any(|&v| v < floor) {
            f.iter_mut().for_each(|v| *v = v.max(floor));
            let total = trapezoid(x, &f);
            f.iter_mut().for_each(|v| *v = (*v / total).max(floor));
        }
        Some(DensityCurve {
            x: x.to_vec(),
            f,
            floor,
        })
    }

    pub fn integral(&self) -> f64 {
        trapezoid(&self.x, &self.f)
    }

    /// Linear interpolation on the grid; `floor` outside it.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.x.len();
        let (lo, hi) = (self.x[0], self.x[n - 1]);
        if !(x >= lo && x <= hi) {
            return self.floor;
        }
        let step = (hi - lo) / (n - 1) as f64;
        let pos = (x - lo) / step;
        let i = (pos.floor() as usize).min(n - 2);
        let t = pos - i as f64;
        (self.f[i] * (1.0 - t) + self.f[i + 1] * t).max(self.floor)
    }

    pub fn log_at(&self, x: f64) -> f64 {
        self.value_at(x).ln()
    }
}

pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2)
        .zip(f.windows(2))
        .map(|(xs, fs)| 0.5 * (xs[1] - xs[0]) * (fs[0] + fs[1]))
        .sum()
}
