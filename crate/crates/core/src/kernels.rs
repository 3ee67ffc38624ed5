//! Gaussian kernels and the two-bandwidth selection rule for the conditional
//! density estimator.

use serde::{Deserialize, Serialize};

use crate::data::{mean_sd, Covariates, SplitPair, MIN_ROWS};
use crate::error::{CgemError, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Multipliers applied to the normal-reference bandwidths during
/// likelihood cross-validation: five log-spaced points over `[1/4, 4]`.
pub const CV_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Smoothing parameters of the conditional density estimator: `b` in the
/// response direction, `h` in the (common-scaled) covariate direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub b: f64,
    pub h: f64,
}

impl Bandwidths {
    pub fn new(b: f64, h: f64) -> Result<Self> {
        check_bandwidth(b, "b")?;
        check_bandwidth(h, "h")?;
        Ok(Bandwidths { b, h })
    }

    /// Parses the `b,h` form used by `--bandwidths`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [b, h] = parts.as_slice() else {
            return Err(CgemError::Config(format!(
                "--bandwidths expects 'b,h', got '{s}'"
            )));
        };
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| CgemError::Config(format!("--bandwidths: '{v}' is not a number")))
        };
        Bandwidths::new(parse(b)?, parse(h)?)
            .map_err(|e| CgemError::Config(format!("--bandwidths: {e}")))
    }
}

fn check_bandwidth(bw: f64, name: &str) -> Result<()> {
    if bw > 0.0 && bw.is_finite() {
        Ok(())
    } else {
        Err(CgemError::Parameter(format!(
            "bandwidth {name} must be positive and finite, got {bw}"
        )))
    }
}

#[inline]
pub(crate) fn gauss_unchecked(u: f64, bw: f64) -> f64 {
    let t = u / bw;
    INV_SQRT_2PI * (-0.5 * t * t).exp() / bw
}

/// `K_b(u) = φ(u / b) / b` with `φ` the standard normal density.
pub fn gauss_kernel_scaled(u: f64, bw: f64) -> Result<f64> {
    check_bandwidth(bw, "bw")?;
    Ok(gauss_unchecked(u, bw))
}

/// Product Gaussian kernel over the coordinates of `zdiff`, sharing one `h`.
pub fn product_kernel_z(zdiff: &[f64], h: f64) -> Result<f64> {
    check_bandwidth(h, "h")?;
    if zdiff.is_empty() || zdiff.len() > 2 {
        return Err(CgemError::Parameter(format!(
            "covariate difference must have dimension 1 or 2, got {}",
            zdiff.len()
        )));
    }
    Ok(zdiff.iter().map(|&u| gauss_unchecked(u, h)).product())
}

/// Per-column factors that bring every covariate column to the average
/// column standard deviation, so that one `h` serves all dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateScale {
    pub factors: Vec<f64>,
    pub mean_sd: f64,
}

impl CovariateScale {
    pub fn from_data(z: &Covariates) -> Result<Self> {
        let sds: Vec<f64> = (0..z.dim()).map(|k| mean_sd(&z.column(k)).1).collect();
        if let Some(k) = sds.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(CgemError::Data(format!(
                "covariate column {} has zero variance",
                k + 1
            )));
        }
        let mean_sd = sds.iter().sum::<f64>() / sds.len() as f64;
        Ok(CovariateScale {
            factors: sds.iter().map(|s| mean_sd / s).collect(),
            mean_sd,
        })
    }

    /// Squared scaled distance between two covariate rows.
    #[inline]
    pub fn dist2(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.factors)
            .map(|((p, q), c)| (c * (p - q)).powi(2))
            .sum()
    }
}

/// Normal-reference starting values `b0 = 0.9 σx n^{-1/5}` and
/// `h0 = 0.9 σz n^{-1/(4+d)}`, with `σz` averaged over covariate columns.
pub fn reference_bandwidths(x: &[f64], z: &Covariates) -> Result<Bandwidths> {
    let n = x.len();
    if n < MIN_ROWS {
        return Err(CgemError::InsufficientData {
            found: n,
            required: MIN_ROWS,
        });
    }
    if z.nrows() != n {
        return Err(CgemError::Data("x and z row counts differ".into()));
    }
    let sx = mean_sd(x).1;
    if !(sx > 0.0) || !sx.is_finite() {
        return Err(CgemError::Data("response column has zero variance".into()));
    }
    let scale = CovariateScale::from_data(z)?;
    let nf = n as f64;
    let d = z.dim() as f64;
    Bandwidths::new(
        0.9 * sx * nf.powf(-0.2),
        0.9 * scale.mean_sd * nf.powf(-1.0 / (4.0 + d)),
    )
}

/// Reference bandwidths refined by 2-fold likelihood cross-validation over
/// the 5×5 grid [`CV_MULTIPLIERS`] × [`CV_MULTIPLIERS`].
///
/// The held-out likelihood uses the locally constant member of the
/// estimator family, `Σ W_h K_b / Σ W_h`, which integrates to one in `x`
/// without a normalization grid. Folds come from `seed`.
pub fn select_bandwidths(x: &[f64], z: &Covariates, seed: u64) -> Result<Bandwidths> {
    let reference = reference_bandwidths(x, z)?;
    let scale = CovariateScale::from_data(z)?;
    let folds = SplitPair::random(x.len(), seed);
    let pairs = [
        FoldPairs::new(x, z, &scale, &folds.d1, &folds.d2),
        FoldPairs::new(x, z, &scale, &folds.d2, &folds.d1),
    ];

    let mut best = (f64::INFINITY, reference);
    for &mb in &CV_MULTIPLIERS {
        for &mh in &CV_MULTIPLIERS {
            let bw = Bandwidths {
                b: reference.b * mb,
                h: reference.h * mh,
            };
            let nll: f64 = pairs.iter().map(|p| p.neg_log_lik(bw)).sum();
            if nll < best.0 {
                best = (nll, bw);
            }
        }
    }
    Ok(best.1)
}

/// Pairwise differences between a held-out fold and its training fold.
struct FoldPairs {
    ntrain: usize,
    // row-major: test-major, train-minor
    dx2: Vec<f64>,
    dz2: Vec<f64>,
}

impl FoldPairs {
    fn new(x: &[f64], z: &Covariates, scale: &CovariateScale, train: &[usize], test: &[usize]) -> Self {
        let mut dx2 = Vec::with_capacity(train.len() * test.len());
        let mut dz2 = Vec::with_capacity(train.len() * test.len());
        for &t in test {
            for &j in train {
                dx2.push((x[j] - x[t]).powi(2));
                dz2.push(scale.dist2(z.row(j), z.row(t)));
            }
        }
        FoldPairs {
            ntrain: train.len(),
            dx2,
            dz2,
        }
    }

    fn neg_log_lik(&self, bw: Bandwidths) -> f64 {
        let kx = -0.5 / (bw.b * bw.b);
        let kz = -0.5 / (bw.h * bw.h);
        let norm = INV_SQRT_2PI / bw.b;
        self.dx2
            .chunks_exact(self.ntrain)
            .zip(self.dz2.chunks_exact(self.ntrain))
            .map(|(dx2, dz2)| {
                let (mut num, mut den) = (0.0, 0.0);
                for (a, c) in dx2.iter().zip(dz2) {
                    let w = (kz * c).exp();
                    num += w * (kx * a).exp();
                    den += w;
                }
                let f = if den > 0.0 { norm * num / den } else { 0.0 };
                -f.max(crate::kcde::CLAMP_FLOOR).ln()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn kernel_values() {
        assert!((gauss_kernel_scaled(0.0, 1.0).unwrap() - 0.398_942_280_4).abs() < 1e-10);
        assert!((gauss_kernel_scaled(2.0, 2.0).unwrap() - 0.120_985_362_3).abs() < 1e-10);
        assert!(gauss_kernel_scaled(1.0, 0.0).is_err());
        assert!(gauss_kernel_scaled(1.0, -1.0).is_err());
    }

    #[test]
    fn kernel_integrates_to_one() {
        // Simpson on [-12 bw, 12 bw]
        for &bw in &[0.05, 0.7, 3.0] {
            let m = 4000;
            let (a, b) = (-12.0 * bw, 12.0 * bw);
            let step = (b - a) / m as f64;
            let mut s = 0.0;
            for i in 0..=m {
                let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * gauss_kernel_scaled(a + i as f64 * step, bw).unwrap();
            }
            assert!((s * step / 3.0 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn product_kernel() {
        assert!((product_kernel_z(&[0.0, 0.0], 1.0).unwrap() - 0.159_154_943_1).abs() < 1e-10);
        assert_eq!(
            product_kernel_z(&[0.3], 0.8).unwrap(),
            gauss_kernel_scaled(0.3, 0.8).unwrap()
        );
        assert_eq!(
            product_kernel_z(&[0.3, -1.1], 0.8).unwrap(),
            product_kernel_z(&[-1.1, 0.3], 0.8).unwrap()
        );
        assert!(product_kernel_z(&[0.0, 0.0, 0.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn kernel_symmetric_nonnegative(u in -50.0f64..50.0, bw in 1e-3f64..10.0) {
            let a = gauss_kernel_scaled(u, bw).unwrap();
            prop_assert_eq!(a, gauss_kernel_scaled(-u, bw).unwrap());
            prop_assert!(a >= 0.0 && a.is_finite());
        }
    }

    #[test]
    fn reference_rule_scaling() {
        let x = normals(400, 1);
        let z = Covariates::from_column(normals(400, 2));
        let r = reference_bandwidths(&x, &z).unwrap();
        let x10: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
        let r10 = reference_bandwidths(&x10, &z).unwrap();
        assert!((r10.b / r.b - 10.0).abs() < 1e-12);
        assert!((r10.h - r.h).abs() < 1e-15);

        // Doubling n with the same sample spread shrinks b0 by 2^{-1/5}.
        let x2: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let z2 = Covariates::from_column(z.column(0).repeat(2));
        let r2 = reference_bandwidths(&x2, &z2).unwrap();
        let sd_ratio = mean_sd(&x2).1 / mean_sd(&x).1;
        assert!((r2.b / (r.b * sd_ratio) - 2f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn selection_on_standard_normals() {
        let x = normals(500, 11);
        let z = Covariates::from_column(normals(500, 12));
        let bw = select_bandwidths(&x, &z, 42).unwrap();
        // Golden values frozen from this seed.
        let reference = reference_bandwidths(&x, &z).unwrap();
        assert!((0.05..=2.0).contains(&bw.b), "{bw:?}");
        assert!((0.05..=2.0).contains(&bw.h), "{bw:?}");
        assert!(CV_MULTIPLIERS.iter().any(|m| (bw.b / reference.b - m).abs() < 1e-12));
        assert_eq!(bw, select_bandwidths(&x, &z, 42).unwrap());
    }

    #[test]
    fn degenerate_columns_rejected() {
        let x = vec![1.0; 30];
        let z = Covariates::from_column(normals(30, 3));
        assert!(matches!(select_bandwidths(&x, &z, 1), Err(CgemError::Data(_))));
        let x = normals(30, 4);
        let z = Covariates::from_column(vec![2.0; 30]);
        assert!(matches!(select_bandwidths(&x, &z, 1), Err(CgemError::Data(_))));
    }

    #[test]
    fn covariate_scale_equalizes_columns() {
        let a = normals(200, 5);
        let b: Vec<f64> = normals(200, 6).iter().map(|v| v * 5.0).collect();
        let z = Covariates::from_columns(&[a, b]).unwrap();
        let s = CovariateScale::from_data(&z).unwrap();
        let scaled0 = mean_sd(&z.column(0)).1 * s.factors[0];
        let scaled1 = mean_sd(&z.column(1)).1 * s.factors[1];
        assert!((scaled0 - scaled1).abs() < 1e-12);
        assert!((scaled0 - s.mean_sd).abs() < 1e-12);
    }
}
