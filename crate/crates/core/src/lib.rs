//! Covariate-adjusted bivariate causal discovery.
//!
//! Decides whether `X → Y | Z` from observational samples by comparing the
//! conditional entropies `H(X | z)` and `H(Y | z)` over a grid of covariate
//! values. The pipeline is:
//!
//! 1. [`kcde`]: kernel conditional density estimates with a local log-linear
//!    link, bandwidths from [`kernels::select_bandwidths`];
//! 2. [`entropy`]: cross-fitted plug-in entropies at each grid point;
//! 3. [`asymmetry`]: the coefficient profile `Ĉ(z) = Ĥ(X|z) - Ĥ(Y|z)`, its
//!    extremum, and a weighted local-quadratic fit for a one-sided bound;
//! 4. [`collider`]: two directional tests combined under Bonferroni to
//!    confirm `X → COL ← Y`.
//!
//! [`simlab`] holds the synthetic structural models, analytic oracles and the
//! accuracy-table runner.

pub mod asymmetry;
pub mod cli;
pub mod collider;
pub mod data;
pub mod entropy;
pub mod error;
pub mod kcde;
pub mod kernels;
pub mod linalg;
pub mod loess;
pub mod rng;
pub mod simlab;

pub use asymmetry::{
    directional_test, AsymmetryConfig, AsymmetryResult, CoefficientProfile, Dynamics,
};
pub use collider::{collider_test, ColliderVerdict};
pub use data::{Covariates, Dataset, SplitPair};
pub use entropy::{EntropyConfig, EntropyProfile};
pub use error::{CgemError, Result};
pub use kcde::{fit_kcde, CondDensityModel};
pub use kernels::Bandwidths;
