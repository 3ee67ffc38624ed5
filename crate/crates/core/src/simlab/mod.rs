//! Synthetic structural models with covariate-dependent mechanisms, their
//! analytic properties, an IGCI baseline, and the accuracy-table runner.
//!
//! In every model `X ~ U(0,1)` independently of `Z`, so the conditional law
//! of the cause is uniform at every `z`.

pub mod diagnostics;
pub mod igci;
pub mod scm;
pub mod table1;

pub use diagnostics::{
    analytic_cac, analytic_coefficient, check_dynamics, check_orthogonality, DynamicsCheck,
    DynamicsClass, OrthogonalityCheck,
};
pub use igci::{igci_adjusted, Direction, IgciVerdict};
pub use scm::{generate_scm, true_dynamics, ScmSpec};
pub use table1::{run_table1, ExperimentReport, Method, Table1Config};
