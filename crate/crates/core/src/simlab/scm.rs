//! The four synthetic structural models and a collider generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::asymmetry::Dynamics;
use crate::data::{Covariates, Dataset, MIN_ROWS};
use crate::error::{CgemError, Result};

pub const MODELS: [u8; 4] = [1, 2, 3, 4];
pub const SIGMAS: [f64; 5] = [0.0, 0.125, 0.25, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmSpec {
    pub model_id: u8,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
}

impl ScmSpec {
    pub fn new(model_id: u8, sigma: f64, n: usize, seed: u64) -> Result<ScmSpec> {
        let spec = ScmSpec {
            model_id,
            sigma,
            n,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_model(self.model_id)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CgemError::Parameter(format!(
                "sigma must be finite and nonnegative, got {}",
                self.sigma
            )));
        }
        if self.n < MIN_ROWS {
            return Err(CgemError::Parameter(format!(
                "n must be at least {MIN_ROWS}, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_model(model_id: u8) -> Result<()> {
    if MODELS.contains(&model_id) {
        Ok(())
    } else {
        Err(CgemError::Parameter(format!(
            "model must be one of 1, 2, 3, 4, got {model_id}"
        )))
    }
}

/// Supports of `(Z1, Z2)`; both are uniform and independent.
pub fn z_support(model_id: u8) -> [(f64, f64); 2] {
    match model_id {
        1 => [(-2.0, -1.0), (0.0, 0.5)],
        2 => [(1.0, 2.0), (1.0, 2.0)],
        _ => [(-1.0, 1.0), (-1.0, 1.0)],
    }
}

/// The regime each model is labelled with: 1 and 3 contracting, 2 and 4
/// expanding.
pub fn true_dynamics(model_id: u8) -> Dynamics {
    match model_id {
        1 | 3 => Dynamics::Contracting,
        _ => Dynamics::Expanding,
    }
}

/// Noise-free mechanism `g_z(x)`.
pub fn mechanism(model_id: u8, x: f64, z: [f64; 2]) -> f64 {
    let [z1, z2] = z;
    match model_id {
        1 | 2 => (z1 + z2 * x).exp(),
        3 => 0.5 * ((1.0 + z1) * x - z2).tanh(),
        _ => 2.0 * z1 * z1 * x + z2.cos(),
    }
}

/// `ln |∂g_z/∂x|`.
pub fn grad_log_abs(model_id: u8, x: f64, z: [f64; 2]) -> f64 {
    let [z1, z2] = z;
    match model_id {
        1 | 2 => z2.ln() + z1 + z2 * x,
        3 => {
            let a = 1.0 + z1;
            let c = (a * x - z2).cosh();
            (0.5 * a).abs().ln() - 2.0 * c.ln()
        }
        _ => (2.0 * z1 * z1).ln(),
    }
}

/// Draws `n` rows of `(X, Z1, Z2, ε)` in that order with `X ~ U(0,1)`,
/// then sets `Y = g_Z(X) + σ ε`. Covariates are not standardized.
pub fn generate_scm(spec: &ScmSpec) -> Result<Dataset> {
    spec.validate()?;
    let [(a1, b1), (a2, b2)] = z_support(spec.model_id);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut x = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    let mut z = Vec::with_capacity(2 * spec.n);
    for _ in 0..spec.n {
        let xi: f64 = rng.random();
        let z1 = a1 + (b1 - a1) * rng.random::<f64>();
        let z2 = a2 + (b2 - a2) * rng.random::<f64>();
        let eps: f64 = StandardNormal.sample(&mut rng);
        x.push(xi);
        y.push(mechanism(spec.model_id, xi, [z1, z2]) + spec.sigma * eps);
        z.extend([z1, z2]);
    }
    Dataset::new(x, y, Covariates::new(z, 2)?)
}

/// Parents and collider `(x, y, col)` with `X, Y ~ U(0,1)` independent and
/// `COL = exp(-1.5 + 0.5 X Y) + σ ε`. Both parent mechanisms contract:
/// `|∂COL/∂x| = 0.5 y · COL < 1` and symmetrically in `y`.
pub fn generate_collider(n: usize, sigma: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut col = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let eps: f64 = StandardNormal.sample(&mut rng);
        x.push(a);
        y.push(b);
        col.push((-1.5 + 0.5 * a * b).exp() + sigma * eps);
    }
    (x, y, col)
}

/// Three independent uniforms `(x, y, col)`.
pub fn generate_independent(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        out.0.push(rng.random());
        out.1.push(rng.random());
        out.2.push(rng.random());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model1_range() {
        let ds = generate_scm(&ScmSpec::new(1, 0.0, 500, 3).unwrap()).unwrap();
        let (lo, hi) = ((-2.0f64).exp(), (-0.5f64).exp());
        assert!(ds.y().iter().all(|&v| v > lo && v < hi));
    }

    #[test]
    fn model4_identity() {
        let ds = generate_scm(&ScmSpec::new(4, 0.0, 200, 9).unwrap()).unwrap();
        for i in 0..ds.n() {
            let z = ds.z().row(i);
            let lhs = ds.y()[i] - z[1].cos();
            assert!((lhs - 2.0 * z[0] * z[0] * ds.x()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_supported() {
        for m in MODELS {
            let spec = ScmSpec::new(m, 0.25, 100, 77).unwrap();
            let a = generate_scm(&spec).unwrap();
            let b = generate_scm(&spec).unwrap();
            assert_eq!(a, b);
            let sup = z_support(m);
            for row in a.z().rows() {
                for k in 0..2 {
                    assert!(row[k] >= sup[k].0 && row[k] <= sup[k].1);
                }
            }
            assert!(a.x().iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }

    #[test]
    fn noise_is_coupled_across_sigma() {
        let a = generate_scm(&ScmSpec::new(2, 0.0, 50, 5).unwrap()).unwrap();
        let b = generate_scm(&ScmSpec::new(2, 0.5, 50, 5).unwrap()).unwrap();
        assert_eq!(a.x(), b.x());
        assert_eq!(a.z(), b.z());
        assert!(a.y() != b.y());
    }

    #[test]
    fn grad_matches_finite_difference() {
        for m in MODELS {
            let z = match m {
                1 => [-1.3, 0.2],
                2 => [1.4, 1.7],
                _ => [0.3, -0.6],
            };
            for x in [0.1, 0.5, 0.9] {
                let h = 1e-6;
                let fd = (mechanism(m, x + h, z) - mechanism(m, x - h, z)) / (2.0 * h);
                assert!((fd.abs().ln() - grad_log_abs(m, x, z)).abs() < 1e-6, "model {m}");
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(ScmSpec::new(5, 0.0, 100, 1).is_err());
        assert!(ScmSpec::new(1, -0.1, 100, 1).is_err());
        assert!(ScmSpec::new(1, 0.0, 19, 1).is_err());
    }
}
