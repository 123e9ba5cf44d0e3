//! Scenario simulation under admissible volatility controls, the forward
//! SDE, the variational processes and the Monte Carlo estimators of the
//! one-sided derivatives of the value function.
//!
//! `ΔQV` is set to `σ_k²dt` rather than realized squared increments. The sup
//! over `𝒫_{t,x}` is approximated by the PDE-extremal feedback control and
//! its tie-flipped variant, each screened by the `K_T` residual.

mod estimators;
mod paths;
mod variational;

pub use estimators::{
    estimate_dt, estimate_dx, verify_measure_in_ptx, write_sensitivity_csv, ControlEstimate,
    MeasureResidual, Sensitivity,
};
pub(crate) use paths::path_rng;
pub use paths::{
    forward_sde, simulate_paths, simulate_state, McSpec, PathBundle, PathSample, TimeAxis,
    VolatilityControl,
};
pub use variational::{variational_paths, FieldLookup, PathVariations, VariationalPaths};
