//! Conditional asymmetry coefficients and the directional test.
//!
//! `Ĉ(z) = Ĥ(X|z) - Ĥ(Y|z)` is evaluated on a grid of covariate values. Under
//! contracting dynamics the minimum over the grid is tested against zero
//! from above; under expanding dynamics the maximum is tested from below.
//! The estimate and its standard error come from a weighted local quadratic
//! fit centred on the raw extremizer.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Covariates, Dataset};
use crate::entropy::{entropy_profile, EntropyConfig, EntropyProfile};
use crate::error::{CgemError, Result};
use crate::loess::{loess_fit_at, LoessConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dynamics {
    /// Geometric mean of `|g'|` below one: the effect carries less entropy.
    Contracting,
    /// Geometric mean of `|g'|` above one: the effect carries more entropy.
    Expanding,
}

impl Dynamics {
    pub const BOTH: [Dynamics; 2] = [Dynamics::Contracting, Dynamics::Expanding];

    pub fn as_str(&self) -> &'static str {
        match self {
            Dynamics::Contracting => "contracting",
            Dynamics::Expanding => "expanding",
        }
    }
}

impl std::fmt::Display for Dynamics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryConfig {
    /// Grid size as a fraction of `n`.
    pub grid_frac: f64,
    /// Quantile trimmed from each end of every covariate.
    pub trim: f64,
    pub loess: LoessConfig,
    pub entropy: EntropyConfig,
}

impl Default for AsymmetryConfig {
    fn default() -> Self {
        AsymmetryConfig {
            grid_frac: 0.10,
            trim: 0.05,
            loess: LoessConfig::default(),
            entropy: EntropyConfig::default(),
        }
    }
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evaluation grid of `ceil(frac · n)` conditioning points at equally
/// spaced empirical quantiles between `trim` and `1 - trim`.
///
/// For two covariates, `m = ceil(√n_e)` quantiles per axis form an `m × m`
/// product grid, from which `n_e` points are taken at evenly spaced
/// positions in row-major order (both extreme corners are always kept).
pub fn build_eval_grid(z: &Covariates, frac: f64, trim: f64) -> Result<Vec<Vec<f64>>> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(CgemError::Config(format!(
            "--grid-frac must lie in (0, 1], got {frac}"
        )));
    }
    if !(0.0..0.5).contains(&trim) {
        return Err(CgemError::Config(format!("trim must lie in [0, 0.5), got {trim}")));
    }
    let n = z.nrows();
    let raw = frac * n as f64;
    if raw < 5.0 - 1e-9 {
        return Err(CgemError::Config(format!(
            "grid fraction {frac} of n = {n} gives fewer than 5 points"
        )));
    }
    let n_e = (raw - 1e-9).ceil() as usize;
    let levels = |count: usize| -> Vec<f64> {
        if count == 1 {
            return vec![0.5];
        }
        (0..count)
            .map(|j| trim + (1.0 - 2.0 * trim) * j as f64 / (count - 1) as f64)
            .collect()
    };
    let axis = |k: usize, count: usize| -> Vec<f64> {
        let mut col = z.column(k);
        col.sort_by(f64::total_cmp);
        levels(count)
            .into_iter()
            .map(|p| quantile_sorted(&col, p))
            .collect()
    };
    match z.dim() {
        1 => Ok(axis(0, n_e).into_iter().map(|v| vec![v]).collect()),
        2 => {
            let m = (n_e as f64).sqrt().ceil() as usize;
            let (a, b) = (axis(0, m), axis(1, m));
            let full: Vec<Vec<f64>> = a
                .iter()
                .flat_map(|&p| b.iter().map(move |&q| vec![p, q]))
                .collect();
            if n_e == full.len() {
                return Ok(full);
            }
            let last = (full.len() - 1) as f64;
            Ok((0..n_e)
                .map(|j| {
                    let pos = (j as f64 * last / (n_e - 1) as f64).round() as usize;
                    full[pos].clone()
                })
                .collect())
        }
        d => Err(CgemError::Config(format!("unsupported covariate dimension {d}"))),
    }
}

/// Pointwise coefficients `Ĉ(zⱼ) = Ĥ(X|zⱼ) - Ĥ(Y|zⱼ)` with variance
/// `var_x + var_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientProfile {
    pub grid: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub var_c: Vec<f64>,
}

pub fn coefficient_profile(ep: &EntropyProfile) -> CoefficientProfile {
    CoefficientProfile {
        grid: ep.grid.clone(),
        c: ep.h_x.iter().zip(&ep.h_y).map(|(a, b)| a - b).collect(),
        var_c: ep.var_x.iter().zip(&ep.var_y).map(|(a, b)| a + b).collect(),
    }
}

impl CoefficientProfile {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Weighted local polynomial estimate and standard error at `z0`.
    pub fn smooth_at(&self, z0: &[f64], cfg: &LoessConfig) -> Result<(f64, f64)> {
        let fit = loess_fit_at(&self.grid, &self.c, &self.var_c, z0, cfg)?;
        Ok((fit.estimate, fit.se))
    }
}

/// Index of the minimum (contracting) or maximum (expanding) of the raw
/// profile; ties go to the smallest index.
pub fn locate_extremum(cp: &CoefficientProfile, dynamics: Dynamics) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &c) in cp.c.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => match dynamics {
                Dynamics::Contracting => c < cp.c[b],
                Dynamics::Expanding => c > cp.c[b],
            },
        };
        if better {
            best = Some(j);
        }
    }
    best
}

/// `Φ⁻¹(1 - alpha)`.
pub fn critical_value(alpha: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryResult {
    pub dynamics: Dynamics,
    pub z0: Vec<f64>,
    pub z0_index: usize,
    /// Smoothed coefficient at `z0`, in nats.
    pub c_hat: f64,
    pub se: f64,
    /// One-sided confidence limit: lower for contracting, upper for
    /// expanding.
    pub bound: f64,
    pub alpha: f64,
    pub reject_null: bool,
}

impl AsymmetryResult {
    /// The one-sided interval as `(lower, upper)`, one end infinite.
    pub fn interval(&self) -> (f64, f64) {
        match self.dynamics {
            Dynamics::Contracting => (self.bound, f64::INFINITY),
            Dynamics::Expanding => (f64::NEG_INFINITY, self.bound),
        }
    }
}

/// Entropy and coefficient profiles of one dataset, shared by both regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub entropy: EntropyProfile,
    pub coefficients: CoefficientProfile,
}

pub fn analyze(ds: &Dataset, seed: u64, cfg: &AsymmetryConfig) -> Result<Analysis> {
    let grid = build_eval_grid(ds.z(), cfg.grid_frac, cfg.trim).map_err(|e| e.at("grid"))?;
    let entropy = entropy_profile(ds, &grid, seed, &cfg.entropy).map_err(|e| e.at("entropy"))?;
    let coefficients = coefficient_profile(&entropy);
    Ok(Analysis {
        entropy,
        coefficients,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(CgemError::Config(format!("alpha must lie in (0, 0.5), got {alpha}")))
    }
}

/// One-sided test of the regime's null hypothesis on an existing analysis.
pub fn test_regime(
    analysis: &Analysis,
    dynamics: Dynamics,
    alpha: f64,
    cfg: &LoessConfig,
) -> Result<AsymmetryResult> {
    check_alpha(alpha)?;
    let cp = &analysis.coefficients;
    let j = locate_extremum(cp, dynamics)
        .ok_or_else(|| CgemError::Inference("empty coefficient profile".into()))?;
    let z0 = cp.grid[j].clone();
    let (c_hat, se) = cp.smooth_at(&z0, cfg).map_err(|e| e.at("loess"))?;
    let q = critical_value(alpha);
    let (bound, reject_null) = match dynamics {
        Dynamics::Contracting => {
            let b = c_hat - q * se;
            (b, b > 0.0)
        }
        Dynamics::Expanding => {
            let b = c_hat + q * se;
            (b, b < 0.0)
        }
    };
    Ok(AsymmetryResult {
        dynamics,
        z0,
        z0_index: j,
        c_hat,
        se,
        bound,
        alpha,
        reject_null,
    })
}

/// Full pipeline for `X → Y | Z` under one regime.
pub fn directional_test(
    ds: &Dataset,
    dynamics: Dynamics,
    alpha: f64,
    seed: u64,
    cfg: &AsymmetryConfig,
) -> Result<AsymmetryResult> {
    check_alpha(alpha)?;
    let analysis = analyze(ds, seed, cfg)?;
    test_regime(&analysis, dynamics, alpha, &cfg.loess)
}
