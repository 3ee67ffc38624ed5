//! Numerical checks of the contracting/expanding classification, the
//! orthogonality condition, and closed-form coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{CgemError, Result};

pub const SIMPSON_POINTS: usize = 2001;
const BOUNDARY_BAND: f64 = 1e-6;

/// Composite Simpson rule on `SIMPSON_POINTS` nodes.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let m = SIMPSON_POINTS - 1;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsClass {
    Contracting,
    Expanding,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsCheck {
    pub geometric_mean: f64,
    pub class: DynamicsClass,
}

/// Geometric mean of `|g'|` over `support`, `exp(mean of ln|g'|)`, and its
/// classification against one with a `1 ± 1e-6` boundary band.
pub fn check_dynamics<F: Fn(f64) -> f64>(
    grad_log_abs: F,
    support: (f64, f64),
) -> Result<DynamicsCheck> {
    let (a, b) = support;
    if !(b > a) {
        return Err(CgemError::Parameter(format!("empty support ({a}, {b})")));
    }
    let mean_log = simpson(&grad_log_abs, a, b) / (b - a);
    let gm = mean_log.exp();
    if !gm.is_finite() {
        return Err(CgemError::Diagnostic(format!(
            "geometric mean of |g'| is not finite on ({a}, {b})"
        )));
    }
    let class = if gm < 1.0 - BOUNDARY_BAND {
        DynamicsClass::Contracting
    } else if gm > 1.0 + BOUNDARY_BAND {
        DynamicsClass::Expanding
    } else {
        DynamicsClass::Boundary
    };
    Ok(DynamicsCheck {
        geometric_mean: gm,
        class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityCheck {
    /// `∫ ln|g'| f`.
    pub lhs: f64,
    /// Uniform average of `ln|g'|` over the support.
    pub rhs: f64,
    pub satisfied: bool,
}

pub fn check_orthogonality<F, D>(
    grad_log_abs: F,
    density: D,
    support: (f64, f64),
) -> Result<OrthogonalityCheck>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (a, b) = support;
    if !(b > a) {
        return Err(CgemError::Parameter(format!("empty support ({a}, {b})")));
    }
    let mass = simpson(&density, a, b);
    if (mass - 1.0).abs() > 1e-6 {
        return Err(CgemError::Parameter(format!(
            "density integrates to {mass} on ({a}, {b}), not 1"
        )));
    }
    let lhs = simpson(|x| grad_log_abs(x) * density(x), a, b);
    let rhs = simpson(&grad_log_abs, a, b) / (b - a);
    if !lhs.is_finite() || !rhs.is_finite() {
        return Err(CgemError::Diagnostic("orthogonality integrals are not finite".into()));
    }
    Ok(OrthogonalityCheck {
        lhs,
        rhs,
        satisfied: (lhs - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()),
    })
}

/// Closed-form `C(z) = H(X|z) - H(Y|z) = -(z1 + ln z2 + z2/2)` for the
/// exponential models 1 and 2 with `X ~ U(0,1)` and no noise.
pub fn analytic_coefficient(model_id: u8, z: [f64; 2]) -> Result<f64> {
    match model_id {
        1 | 2 => Ok(-(z[0] + z[1].ln() + z[1] / 2.0)),
        m => Err(CgemError::Parameter(format!(
            "no closed-form coefficient for model {m}"
        ))),
    }
}

/// Extremal coefficient over the covariate support: the minimum for model 1
/// (at the corner `(-1, 0.5)`), the maximum for model 2 (at `(1, 1)`).
pub fn analytic_cac(model_id: u8) -> Result<f64> {
    match model_id {
        1 => analytic_coefficient(1, [-1.0, 0.5]),
        2 => analytic_coefficient(2, [1.0, 1.0]),
        m => Err(CgemError::Parameter(format!(
            "no closed-form coefficient for model {m}"
        ))),
    }
}
