//! Degenerate G-BSDEs through the ε-regularization pipeline, the `K`
//! process along paths, and the quantitative experiments built on them.
//!
//! The limit `u0` is a first-order Richardson extrapolation in `ε`; the raw
//! levels are always kept next to it.

mod counterexample;
mod experiments;
mod family;
pub(crate) mod kprocess;
mod norms;

pub use counterexample::{
    counterexample_bound, counterexample_demo, CounterexampleReport, CounterexampleRow,
};
pub use experiments::{
    convergence_report, dynamic_programming_check, refinement_ladder, second_derivative_scan,
    semiconvexity_scan, stability_check, ConvergenceReport, ConvergenceRow, CurvatureScan,
    SemiconvexityReport, StabilityLevel, StabilityReport,
};
pub use family::{reconstruct_k, solve_gbsde, BsdeProblem, BsdeSolutionFamily, FamilyDiagnostics};
pub use kprocess::{reconstruct_k_from_solution, KPath};
pub use norms::{path_norms, PathNorms};
