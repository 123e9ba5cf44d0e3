use serde::Serialize;

use crate::error::Result;

use super::scheme::PdeSolution;

/// Fitted constants of the space and time moduli of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityFit {
    /// Smallest `C` with `|u(t,x₁) − u(t,x₂)| ≤ C(1 + |x₁|^m + |x₂|^m)|x₁ − x₂|`.
    pub space: f64,
    /// Smallest `C` with `|u(t₁,x) − u(t₂,x)| ≤ C(1 + |x|^{m+1})√(t₂ − t₁)`.
    pub time: f64,
}

/// Probe points at fixed physical locations so that fits on refined grids
/// compare like with like: `x` every `x_step` across the core window and
/// `t ∈ {0, T/4, T/2, 3T/4}`.
pub fn regularity_fit(sol: &PdeSolution, m: u32, x_step: f64) -> Result<RegularityFit> {
    let grid = &sol.grid;
    let core = grid.core_range();
    let (lo, hi) = (grid.x(core.start), grid.x(core.end - 1));
    let n = ((hi - lo) / x_step).floor() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * x_step).collect();
    let ts: Vec<f64> = (0..4).map(|q| grid.horizon * q as f64 / 4.0).collect();
    let mp = m as i32;
    let mut space: f64 = 0.0;
    let mut time: f64 = 0.0;
    let values: Vec<Vec<f64>> = ts
        .iter()
        .map(|t| xs.iter().map(|x| sol.value_at(*t, *x)).collect())
        .collect::<Result<_>>()?;
    for row in &values {
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                let (x1, x2) = (xs[i], xs[j]);
                let weight = (1.0 + x1.abs().powi(mp) + x2.abs().powi(mp)) * (x2 - x1);
                space = space.max((row[i] - row[j]).abs() / weight);
            }
        }
    }
    for a in 0..ts.len() {
        for b in a + 1..ts.len() {
            let dt = (ts[b] - ts[a]).sqrt();
            for (i, x) in xs.iter().enumerate() {
                let weight = (1.0 + x.abs().powi(mp + 1)) * dt;
                time = time.max((values[a][i] - values[b][i]).abs() / weight);
            }
        }
    }
    Ok(RegularityFit { space, time })
}

/// `max |∂_x u|` over the core window and all levels.
pub fn gradient_bound(sol: &PdeSolution) -> f64 {
    let core = sol.grid.core_range();
    let dx = sol.dx();
    sol.u
        .iter()
        .flat_map(|row| {
            core.clone()
                .map(move |i| ((row[i + 1] - row[i - 1]) / (2.0 * dx)).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::{DriverSpec, GFunction1D, Grid1D, Params, Payoff};
    use crate::pde::{solve_terminal_pde, PdeForm, PdeProblem};
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_payoff_moduli() {
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        let d = DriverSpec::g_heat(Payoff::preset("linear", &Params::new()).unwrap()).unwrap();
        let grid = Grid1D::centered(0.0, 1.0, 1.0, 2.0, 101).unwrap();
        let sol =
            solve_terminal_pde(&PdeProblem::with_cfl(grid, d, g, PdeForm::GHeat, 0.9).unwrap())
                .unwrap();
        let fit = regularity_fit(&sol, 1, 0.25).unwrap();
        // |x₁ − x₂| / ((1 + |x₁| + |x₂|)|x₁ − x₂|) peaks at x₁ = x₂ = 0.
        assert!(fit.space <= 1.0 && fit.space > 0.6);
        assert_abs_diff_eq!(fit.time, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gradient_bound(&sol), 1.0, epsilon = 1e-12);
    }
}
