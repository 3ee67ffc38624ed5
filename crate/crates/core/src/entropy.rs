//! Cross-fitted conditional entropy estimates.
//!
//! The sample is split into halves `d1`, `d2`. A conditional density model
//! fitted on one half is evaluated at the responses of the other half, and
//! the two plug-in averages of `-ln f̂(vᵢ | z)` are averaged.
//!
//! With [`TermWeighting::Localized`] (the default) each plug-in term is
//! weighted by the covariate kernel `W_h(Zᵢ - z)` of the evaluating model,
//! so the average runs over observations whose covariates sit near `z`.
//! [`TermWeighting::Pooled`] gives every term weight one. The two agree when
//! the response is independent of the covariates; only the localized form
//! targets `H(V | z)` when it is not.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, Dataset, SplitPair};
use crate::error::{CgemError, Result};
use crate::kcde::{CondDensityModel, DEFAULT_GRID_POINTS};
use crate::kernels::{select_bandwidths, Bandwidths};
use crate::rng::derive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TermWeighting {
    #[default]
    Localized,
    Pooled,
    /// Kernel-weighted like `Localized`, but each term is evaluated at its
    /// own covariate: `-ln f̂(vᵢ | Zᵢ)`.
    Pointwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    /// Points in each model's normalization grid.
    pub density_grid: usize,
    pub weighting: TermWeighting,
    /// Fixed bandwidths for every half fit; selected per half when `None`.
    pub bandwidths: Option<Bandwidths>,
    /// Fraction of grid points that must survive for a profile to be kept.
    pub min_retained: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            density_grid: DEFAULT_GRID_POINTS,
            weighting: TermWeighting::Localized,
            bandwidths: None,
            min_retained: 0.8,
        }
    }
}

/// Cross-fitted entropy (nats) with its naive variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub estimate: f64,
    pub variance: f64,
}

/// Density models fitted on both halves of one split, ready to be queried
/// at any conditioning point.
pub struct CrossFit<'a> {
    v: &'a [f64],
    z: &'a Covariates,
    split: &'a SplitPair,
    /// Fitted on `d1`.
    m1: CondDensityModel,
    /// Fitted on `d2`.
    m2: CondDensityModel,
    weighting: TermWeighting,
    /// `-ln f̂_opposite(vᵢ | Zᵢ)` per row, for [`TermWeighting::Pointwise`].
    own: Vec<f64>,
}

impl<'a> CrossFit<'a> {
    pub fn new(
        v: &'a [f64],
        z: &'a Covariates,
        split: &'a SplitPair,
        cfg: &EntropyConfig,
    ) -> Result<Self> {
        if v.len() != z.nrows() || split.len() != v.len() {
            return Err(CgemError::Data(format!(
                "split covers {} rows but data has {}",
                split.len(),
                v.len()
            )));
        }
        let fit_half = |idx: &[usize]| -> Result<CondDensityModel> {
            let vh: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
            let zh = z.select(idx);
            let bw = match cfg.bandwidths {
                Some(bw) => bw,
                // Seeded by the half's identity so swapping halves is a relabeling.
                None => select_bandwidths(&vh, &zh, derive(split.seed, &[idx[0] as u64]))?,
            };
            CondDensityModel::fit(&vh, &zh, bw, cfg.density_grid)
        };
        let mut fit = CrossFit {
            v,
            z,
            split,
            m1: fit_half(&split.d1)?,
            m2: fit_half(&split.d2)?,
            weighting: cfg.weighting,
            own: Vec::new(),
        };
        if fit.weighting == TermWeighting::Pointwise {
            let mut opposite = vec![None; v.len()];
            for &i in &split.d1 {
                opposite[i] = Some(&fit.m2);
            }
            for &i in &split.d2 {
                opposite[i] = Some(&fit.m1);
            }
            fit.own = (0..v.len())
                .into_par_iter()
                .map(|i| {
                    let m = opposite[i].expect("split covers every row");
                    m.log_density_at(v[i], z.row(i)).map(|l| -l)
                })
                .collect::<Result<Vec<f64>>>()?;
        }
        Ok(fit)
    }

    pub fn models(&self) -> (&CondDensityModel, &CondDensityModel) {
        (&self.m1, &self.m2)
    }

    pub fn estimate_at(&self, zq: &[f64]) -> Result<EntropyEstimate> {
        let tag = |e: CgemError| match e {
            CgemError::Extrapolation { .. } | CgemError::DegenerateDensity { .. } => e,
            other => other.at("entropy"),
        };
        let (half1, half2) = if self.weighting == TermWeighting::Pointwise {
            (
                self.own_terms(&self.split.d1, &self.m2, zq)?,
                self.own_terms(&self.split.d2, &self.m1, zq)?,
            )
        } else {
            let c2 = self.m2.normalized_density(zq).map_err(tag)?;
            let c1 = self.m1.normalized_density(zq).map_err(tag)?;
            (
                self.terms(&self.split.d1, &c2, &self.m2, zq)?,
                self.terms(&self.split.d2, &c1, &self.m1, zq)?,
            )
        };
        Ok(match self.weighting {
            TermWeighting::Localized | TermWeighting::Pointwise => {
                let (m1, v1) = half1.weighted_mean_var();
                let (m2, v2) = half2.weighted_mean_var();
                EntropyEstimate {
                    estimate: 0.5 * (m1 + m2),
                    variance: 0.25 * (v1 + v2),
                }
            }
            TermWeighting::Pooled => {
                let (m1, _) = half1.weighted_mean_var();
                let (m2, _) = half2.weighted_mean_var();
                let all: Vec<f64> = half1.t.iter().chain(&half2.t).copied().collect();
                let n = all.len() as f64;
                let mean = all.iter().sum::<f64>() / n;
                let s2 = all.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
                EntropyEstimate {
                    estimate: 0.5 * (m1 + m2),
                    variance: s2 / n,
                }
            }
        })
    }

    fn terms(
        &self,
        idx: &[usize],
        curve: &crate::kcde::DensityCurve,
        model: &CondDensityModel,
        zq: &[f64],
    ) -> Result<Terms> {
        let t: Vec<f64> = idx.iter().map(|&i| -curve.log_at(self.v[i])).collect();
        let w = match self.weighting {
            TermWeighting::Pooled => vec![1.0; idx.len()],
            _ => self.local_weights(idx, model, zq)?,
        };
        Ok(Terms { t, w })
    }

    fn own_terms(&self, idx: &[usize], model: &CondDensityModel, zq: &[f64]) -> Result<Terms> {
        Ok(Terms {
            t: idx.iter().map(|&i| self.own[i]).collect(),
            w: self.local_weights(idx, model, zq)?,
        })
    }

    fn local_weights(&self, idx: &[usize], model: &CondDensityModel, zq: &[f64]) -> Result<Vec<f64>> {
        let lw: Vec<f64> = idx
            .iter()
            .map(|&i| model.log_weight(self.z.row(i), zq))
            .collect();
        let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(CgemError::Extrapolation { z: zq.to_vec() });
        }
        Ok(lw.iter().map(|l| (l - max).exp()).collect())
    }
}

struct Terms {
    t: Vec<f64>,
    w: Vec<f64>,
}

impl Terms {
    /// Weighted mean and the variance of that mean, `s²_w / n_eff` with
    /// `n_eff = (Σw)² / Σw²`. Uniform weights give the usual `s² / n`.
    fn weighted_mean_var(&self) -> (f64, f64) {
        let sw: f64 = self.w.iter().sum();
        let sw2: f64 = self.w.iter().map(|w| w * w).sum();
        let mean = self.t.iter().zip(&self.w).map(|(t, w)| t * w).sum::<f64>() / sw;
        let n_eff = sw * sw / sw2;
        if n_eff <= 1.0 {
            return (mean, 0.0);
        }
        let ss = self
            .t
            .iter()
            .zip(&self.w)
            .map(|(t, w)| w * (t - mean).powi(2))
            .sum::<f64>()
            / sw;
        // Bessel-type correction for weighted samples.
        let s2 = ss * n_eff / (n_eff - 1.0);
        (mean, s2 / n_eff)
    }
}

/// Cross-fitted entropy of `v` given `z = zq`.
pub fn crossfit_entropy(
    v: &[f64],
    z: &Covariates,
    zq: &[f64],
    split: &SplitPair,
    cfg: &EntropyConfig,
) -> Result<EntropyEstimate> {
    CrossFit::new(v, z, split, cfg)?.estimate_at(zq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPoint {
    pub index: usize,
    pub z: Vec<f64>,
    pub error: String,
}

/// Entropy estimates for X and Y over a grid of conditioning points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub grid: Vec<Vec<f64>>,
    pub h_x: Vec<f64>,
    pub h_y: Vec<f64>,
    pub var_x: Vec<f64>,
    pub var_y: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    /// Grid points removed because an estimate failed there.
    pub dropped: Vec<DroppedPoint>,
}

impl EntropyProfile {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// CSV with header `z_1[,z_2],h_x,h_y,var_x,var_y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.grid.first().map_or(1, Vec::len);
        let mut header: Vec<String> = (1..=d).map(|k| format!("z_{k}")).collect();
        header.extend(["h_x", "h_y", "var_x", "var_y"].map(String::from));
        w.write_record(&header)
            .map_err(|e| CgemError::Io(e.to_string()))?;
        for j in 0..self.len() {
            let mut rec: Vec<String> = self.grid[j].iter().map(|v| v.to_string()).collect();
            for v in [self.h_x[j], self.h_y[j], self.var_x[j], self.var_y[j]] {
                rec.push(v.to_string());
            }
            w.write_record(&rec).map_err(|e| CgemError::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cross-fitted `Ĥ(X|z)` and `Ĥ(Y|z)` at every grid point, all from one
/// split drawn with `seed`.
pub fn entropy_profile(
    ds: &Dataset,
    grid: &[Vec<f64>],
    seed: u64,
    cfg: &EntropyConfig,
) -> Result<EntropyProfile> {
    if grid.is_empty() {
        return Err(CgemError::Config("entropy profile needs a nonempty grid".into()));
    }
    let split = SplitPair::random(ds.n(), seed);
    let fx = CrossFit::new(ds.x(), ds.z(), &split, cfg).map_err(|e| e.at("entropy(x)"))?;
    let fy = CrossFit::new(ds.y(), ds.z(), &split, cfg).map_err(|e| e.at("entropy(y)"))?;

    let results: Vec<Result<(EntropyEstimate, EntropyEstimate)>> = grid
        .par_iter()
        .map(|zq| Ok((fx.estimate_at(zq)?, fy.estimate_at(zq)?)))
        .collect();

    let mut profile = EntropyProfile {
        grid: Vec::new(),
        h_x: Vec::new(),
        h_y: Vec::new(),
        var_x: Vec::new(),
        var_y: Vec::new(),
        n: ds.n(),
        seed,
        dropped: Vec::new(),
    };
    for (index, (zq, res)) in grid.iter().zip(results).enumerate() {
        match res {
            Ok((ex, ey)) if [ex.estimate, ey.estimate, ex.variance, ey.variance]
                .iter()
                .all(|v| v.is_finite()) =>
            {
                profile.grid.push(zq.clone());
                profile.h_x.push(ex.estimate);
                profile.h_y.push(ey.estimate);
                profile.var_x.push(ex.variance.max(0.0));
                profile.var_y.push(ey.variance.max(0.0));
            }
            Ok(_) => profile.dropped.push(DroppedPoint {
                index,
                z: zq.clone(),
                error: "non-finite estimate".into(),
            }),
            Err(e) => profile.dropped.push(DroppedPoint {
                index,
                z: zq.clone(),
                error: e.to_string(),
            }),
        }
    }
    let kept = profile.len() as f64 / grid.len() as f64;
    if kept < cfg.min_retained {
        return Err(CgemError::Inference(format!(
            "only {} of {} grid points produced entropy estimates; first failure: {}",
            profile.len(),
            grid.len(),
            profile.dropped.first().map_or("none", |d| d.error.as_str())
        )));
    }
    Ok(profile)
}
