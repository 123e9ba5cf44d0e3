//! Monotone explicit finite-difference solver for the terminal-value
//! problems
//!
//! ```text
//! ∂_t u + G(σ²∂²_xx u + 2h∂_x u + 2g(t,x,u,σ∂_x u)) + b∂_x u + f(t,x,u) = 0,
//! u(T, ·) = φ,
//! ```
//!
//! which covers the G-heat equation (`b = h = f = g = 0`, `σ ≡ 1`) and the
//! regularized G-BSDE equation `∂_t u + G_ε(∂²u + 2h(u, ∂u)) = 0` as special
//! cases. The scheme never divides by `σ_low`, so degenerate generators are
//! solved directly.

mod export;
mod fields;
mod regularity;
mod scheme;

pub use export::write_solution_csv;
pub use fields::{derivatives, extremal_control, ControlField, DerivativeFields};
pub use regularity::{gradient_bound, regularity_fit, RegularityFit};
pub use scheme::{
    cfl_timestep, solve_from_terminal, solve_terminal_pde, PdeForm, PdeProblem, PdeSolution,
    SolveMetadata,
};
