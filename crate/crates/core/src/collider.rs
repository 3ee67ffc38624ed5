//! Collider confirmation: `X → COL ← Y`.
//!
//! Two directional tests are run on the same collider candidate, one with
//! `X` as cause and `Y` as covariate, the other with the roles of the parents
//! exchanged. Each runs at `alpha / 2`, and the structure is confirmed only
//! when both reject.

use serde::{Deserialize, Serialize};

use crate::asymmetry::{analyze, test_regime, AsymmetryConfig, AsymmetryResult, CoefficientProfile, Dynamics};
use crate::data::{Covariates, Dataset};
use crate::error::{CgemError, Result};
use crate::rng::derive;

/// Seed tags for the two sub-tests.
pub const TAG_X: u64 = 0x78;
pub const TAG_Y: u64 = 0x79;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColliderVerdict {
    /// `X → COL | Y`.
    pub test_x: Option<AsymmetryResult>,
    /// `Y → COL | X`.
    pub test_y: Option<AsymmetryResult>,
    /// Failure messages of sub-tests that produced no result.
    pub errors: Vec<String>,
    pub alpha_overall: f64,
    pub alpha_each: f64,
    pub confirmed: bool,
    pub dynamics: Dynamics,
}

fn sub_dataset(cause: &[f64], col: &[f64], covariate: &[f64]) -> Result<Dataset> {
    Dataset::new(
        cause.to_vec(),
        col.to_vec(),
        Covariates::from_column(covariate.to_vec()),
    )
}

/// Both sub-tests under every regime in `regimes`, with explicit split
/// seeds for the `X` and `Y` sub-tests. The entropy profiles are shared
/// between regimes.
pub fn collider_test_with_seeds(
    x: &[f64],
    y: &[f64],
    col: &[f64],
    regimes: &[Dynamics],
    alpha_overall: f64,
    seed_x: u64,
    seed_y: u64,
    cfg: &AsymmetryConfig,
) -> Result<Vec<ColliderVerdict>> {
    if x.len() != y.len() || x.len() != col.len() {
        return Err(CgemError::Data(format!(
            "collider inputs differ in length: x {}, y {}, col {}",
            x.len(),
            y.len(),
            col.len()
        )));
    }
    if !(alpha_overall > 0.0 && alpha_overall < 0.5) {
        return Err(CgemError::Config(format!(
            "alpha must lie in (0, 0.5), got {alpha_overall}"
        )));
    }
    let alpha_each = alpha_overall / 2.0;
    let ds_x = sub_dataset(x, col, y)?;
    let ds_y = sub_dataset(y, col, x)?;

    let (ax, ay) = rayon::join(
        || analyze(&ds_x, seed_x, cfg).map_err(|e| e.at("collider x")),
        || analyze(&ds_y, seed_y, cfg).map_err(|e| e.at("collider y")),
    );

    Ok(regimes
        .iter()
        .map(|&dynamics| {
            let mut errors = Vec::new();
            let mut run = |a: &Result<crate::asymmetry::Analysis>, label: &str| match a {
                Ok(a) => match test_regime(a, dynamics, alpha_each, &cfg.loess) {
                    Ok(r) => Some(r),
                    Err(e) => {
                        errors.push(format!("{label}: {e}"));
                        None
                    }
                },
                Err(e) => {
                    errors.push(format!("{label}: {e}"));
                    None
                }
            };
            let test_x = run(&ax, "x -> col | y");
            let test_y = run(&ay, "y -> col | x");
            let confirmed = matches!((&test_x, &test_y), (Some(a), Some(b)) if a.reject_null && b.reject_null);
            ColliderVerdict {
                test_x,
                test_y,
                errors,
                alpha_overall,
                alpha_each,
                confirmed,
                dynamics,
            }
        })
        .collect())
}

/// Collider test under one regime, sub-test seeds derived from `seed`.
pub fn collider_test(
    x: &[f64],
    y: &[f64],
    col: &[f64],
    dynamics: Dynamics,
    alpha_overall: f64,
    seed: u64,
    cfg: &AsymmetryConfig,
) -> Result<ColliderVerdict> {
    let mut v = collider_test_with_seeds(
        x,
        y,
        col,
        &[dynamics],
        alpha_overall,
        derive(seed, &[TAG_X]),
        derive(seed, &[TAG_Y]),
        cfg,
    )?;
    Ok(v.remove(0))
}

/// Largest noise standard deviation compatible with both coefficient
/// profiles: `min_j (exp(2 c_j) - 1) / I_j` over both grids, floored at 0.
///
/// `fisher_*` are conditional Fisher informations of the effect, aligned
/// with the profile grids and supplied by the caller.
pub fn collider_noise_bound(
    c_profile_x: &CoefficientProfile,
    fisher_x: &[f64],
    c_profile_y: &CoefficientProfile,
    fisher_y: &[f64],
) -> Result<f64> {
    let mut bound = f64::INFINITY;
    for (cp, fisher) in [(c_profile_x, fisher_x), (c_profile_y, fisher_y)] {
        if cp.c.len() != fisher.len() {
            return Err(CgemError::Parameter(format!(
                "{} Fisher values for {} grid points",
                fisher.len(),
                cp.c.len()
            )));
        }
        for (&c, &i) in cp.c.iter().zip(fisher) {
            if !(i > 0.0 && i.is_finite()) {
                return Err(CgemError::Parameter(format!(
                    "Fisher information must be positive, got {i}"
                )));
            }
            bound = bound.min((2.0 * c).exp_m1() / i);
        }
    }
    if bound.is_infinite() {
        return Err(CgemError::Parameter("empty coefficient profiles".into()));
    }
    Ok(bound.max(0.0))
}

/// One line of a collider scan, estimates and bounds scaled by 100.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub x: String,
    pub y: String,
    pub col: String,
    pub dynamics: Dynamics,
    pub x_to_col: String,
    pub y_to_col: String,
    pub confirmed: bool,
}

/// `"7.39 (7.38, Inf)"` for contracting, `"-3.10 (-Inf, -1.20)"` for
/// expanding; `"NA"` when the sub-test failed.
pub fn format_scaled(r: Option<&AsymmetryResult>) -> String {
    match r {
        None => "NA".into(),
        Some(r) => {
            let est = 100.0 * r.c_hat;
            let b = 100.0 * r.bound;
            match r.dynamics {
                Dynamics::Contracting => format!("{est:.2} ({b:.2}, Inf)"),
                Dynamics::Expanding => format!("{est:.2} (-Inf, {b:.2})"),
            }
        }
    }
}

impl ScanRow {
    pub fn new(x: &str, y: &str, col: &str, v: &ColliderVerdict) -> ScanRow {
        ScanRow {
            x: x.into(),
            y: y.into(),
            col: col.into(),
            dynamics: v.dynamics,
            x_to_col: format_scaled(v.test_x.as_ref()),
            y_to_col: format_scaled(v.test_y.as_ref()),
            confirmed: v.confirmed,
        }
    }
}
