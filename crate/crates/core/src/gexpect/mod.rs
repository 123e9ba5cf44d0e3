//! G-expectations of terminal payoffs and cylinder functionals through the
//! G-heat equation, a brute-force trinomial-lattice oracle, and the Doob
//! maximal inequality check.
//!
//! The lattice menu defaults to `{σ_low, σ_high}`: each node's value is
//! linear in `σ²`, so interior volatilities are never strictly optimal.

mod doob;
mod heat;
mod lattice;

pub use doob::{doob_check, doob_constant, DoobReport};
pub use heat::{
    conditional_gexpect, default_stage_grids, gexpect_cylinder, gexpect_row, gexpect_terminal,
    ConditionalTable, MAX_CYLINDER_TIMES,
};
pub use lattice::{lattice_markov, lattice_oracle, LatticeSpec, LatticeTable, STATE_LIMIT};
