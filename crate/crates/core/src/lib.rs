//! Numerical laboratory for sublinear (G-)expectations, G-Brownian motion and
//! backward SDEs driven by G-Brownian motion, including the degenerate
//! volatility case handled through ε-regularization.
//!
//! Module map:
//! - [`gcore`]: generators, coefficient bundles, grids, cylinder functionals
//! - [`pde`]: monotone explicit scheme for the fully nonlinear terminal-value PDEs
//! - [`gexpect`]: G-expectations, the trinomial-lattice oracle and the Doob check
//! - [`scenario`]: path simulation under volatility controls and derivative estimators
//! - [`gbsde`]: the ε-pipeline and the quantitative experiments built on it

// Negated float comparisons are how NaN inputs get rejected.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod gbsde;
pub mod gcore;
pub mod gexpect;
pub mod pde;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
pub use exec::Execution;
