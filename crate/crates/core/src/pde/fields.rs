use crate::error::{Error, Result};
use crate::gcore::{GFunction1D, Grid1D};

use super::scheme::{interp_on_grid, PdeSolution};

/// `∂_x u`, `∂²_xx u` and `∂_t u` on the solution grid.
#[derive(Debug, Clone)]
pub struct DerivativeFields {
    pub ux: Vec<Vec<f64>>,
    pub uxx: Vec<Vec<f64>>,
    pub ut: Vec<Vec<f64>>,
}

fn space_derivatives(row: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
    let n = row.len();
    let mut ux = vec![0.0; n];
    let mut uxx = vec![0.0; n];
    for i in 1..n - 1 {
        ux[i] = (row[i + 1] - row[i - 1]) / (2.0 * dx);
        uxx[i] = (row[i + 1] - 2.0 * row[i] + row[i - 1]) / (dx * dx);
    }
    ux[0] = (row[1] - row[0]) / dx;
    ux[n - 1] = (row[n - 1] - row[n - 2]) / dx;
    uxx[0] = (row[2] - 2.0 * row[1] + row[0]) / (dx * dx);
    uxx[n - 1] = (row[n - 1] - 2.0 * row[n - 2] + row[n - 3]) / (dx * dx);
    (ux, uxx)
}

/// Central differences inside, one-sided at the boundary; `∂_t u` is the
/// forward difference between consecutive levels (backward on the last).
pub fn derivatives(sol: &PdeSolution) -> Result<DerivativeFields> {
    if sol.grid.nx < 3 {
        return Err(Error::domain("derivatives need at least 3 spatial nodes"));
    }
    let dx = sol.dx();
    let dt = sol.dt();
    let (ux, uxx): (Vec<_>, Vec<_>) = sol.u.iter().map(|row| space_derivatives(row, dx)).unzip();
    let nt = sol.grid.nt;
    let ut = (0..=nt)
        .map(|k| {
            let (lo, hi) = if k < nt { (k, k + 1) } else { (k - 1, k) };
            sol.u[hi]
                .iter()
                .zip(&sol.u[lo])
                .map(|(b, a)| (b - a) / dt)
                .collect()
        })
        .collect();
    Ok(DerivativeFields { ux, uxx, ut })
}

impl DerivativeFields {
    /// Derivative fields of an arbitrary tabulated field (used in tests and
    /// for user-supplied tables).
    pub fn of_table(u: &[Vec<f64>], dx: f64, dt: f64) -> Self {
        let (ux, uxx): (Vec<_>, Vec<_>) = u.iter().map(|row| space_derivatives(row, dx)).unzip();
        let n = u.len();
        let ut = (0..n)
            .map(|k| {
                let (lo, hi) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
                u[hi]
                    .iter()
                    .zip(&u[lo])
                    .map(|(b, a)| (b - a) / dt)
                    .collect()
            })
            .collect();
        Self { ux, uxx, ut }
    }
}

/// Per-node maximizer of `G(a)`: `σ_high` where `a > tol`, `σ_low` where
/// `a < −tol`, ambiguous (resolved to `σ_high`) in between.
#[derive(Debug, Clone)]
pub struct ControlField {
    pub grid: Grid1D,
    pub g: GFunction1D,
    pub tie_tol: f64,
    pub sigma_star: Vec<Vec<f64>>,
    pub ambiguous: Vec<Vec<bool>>,
    a_field: Vec<Vec<f64>>,
}

impl ControlField {
    fn classify(&self, a: f64, flip_ambiguous: bool) -> f64 {
        let ambiguous = a.abs() <= self.tie_tol;
        if a < -self.tie_tol || (ambiguous && flip_ambiguous) {
            self.g.sigma_low()
        } else {
            self.g.sigma_high()
        }
    }

    /// `a` at the level containing `t` (left endpoint), linear in `x`.
    pub fn a_at(&self, t: f64, x: f64) -> Result<f64> {
        let k = ((t / self.grid.dt()) + 1e-9).floor().max(0.0) as usize;
        interp_on_grid(&self.grid, &self.a_field[k.min(self.grid.nt)], x)
    }

    /// Feedback volatility at `(t, x)`. With `flip_ambiguous`, ties resolve
    /// to `σ_low` instead of `σ_high`.
    pub fn sigma_at(&self, t: f64, x: f64, flip_ambiguous: bool) -> Result<f64> {
        Ok(self.classify(self.a_at(t, x)?, flip_ambiguous))
    }

    /// Fraction of nodes on `level` whose extremal volatility is `σ_high`.
    pub fn fraction_high(&self, level: usize) -> f64 {
        let row = &self.sigma_star[level];
        row.iter().filter(|s| **s == self.g.sigma_high()).count() as f64 / row.len() as f64
    }

    pub fn ambiguous_count(&self) -> usize {
        self.ambiguous.iter().flatten().filter(|a| **a).count()
    }
}

/// `tie_tol = None` uses `1e-10·max|a|`.
pub fn extremal_control(sol: &PdeSolution, g: &GFunction1D, tie_tol: Option<f64>) -> ControlField {
    let tie_tol = tie_tol.unwrap_or_else(|| {
        1e-10
            * sol
                .a_field
                .iter()
                .flatten()
                .fold(0.0_f64, |m, a| m.max(a.abs()))
    });
    let mut field = ControlField {
        grid: sol.grid,
        g: *g,
        tie_tol,
        sigma_star: Vec::new(),
        ambiguous: Vec::new(),
        a_field: sol.a_field.clone(),
    };
    field.sigma_star = sol
        .a_field
        .iter()
        .map(|row| row.iter().map(|a| field.classify(*a, false)).collect())
        .collect();
    field.ambiguous = sol
        .a_field
        .iter()
        .map(|row| row.iter().map(|a| a.abs() <= tie_tol).collect())
        .collect();
    field
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::{DriverSpec, Params, Payoff};
    use crate::pde::{solve_terminal_pde, PdeForm, PdeProblem};
    use approx::assert_abs_diff_eq;

    fn solve(payoff: &str, params: &Params) -> PdeSolution {
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        let driver = DriverSpec::g_heat(Payoff::preset(payoff, params).unwrap()).unwrap();
        let grid = Grid1D::centered(0.0, 1.0, 1.0, 2.0, 201).unwrap();
        let p = PdeProblem::with_cfl(grid, driver, g, PdeForm::GHeat, 0.9).unwrap();
        solve_terminal_pde(&p).unwrap()
    }

    #[test]
    fn quadratic_table_derivatives_are_exact() {
        let xs: Vec<f64> = (0..11).map(|i| -1.0 + 0.2 * i as f64).collect();
        let row: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let d = DerivativeFields::of_table(&[row.clone(), row], 0.2, 0.1);
        for i in 1..10 {
            assert_abs_diff_eq!(d.ux[0][i], 2.0 * xs[i], epsilon = 1e-12);
            assert_abs_diff_eq!(d.uxx[0][i], 2.0, epsilon = 1e-12);
        }
        assert!(d.ut[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_table_has_zero_derivatives() {
        let d = DerivativeFields::of_table(&[vec![3.0; 7], vec![3.0; 7]], 0.5, 0.1);
        for f in [&d.ux, &d.uxx, &d.ut] {
            assert!(f.iter().flatten().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn time_derivative_of_convex_quadratic() {
        let sol = solve("quadratic", &Params::new());
        let d = derivatives(&sol).unwrap();
        let i = sol.node_of(0.0);
        assert_abs_diff_eq!(d.ut[0][i], -1.0, epsilon = 2e-2);
    }

    #[test]
    fn extremal_control_of_quadratics() {
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        let sol = solve("quadratic", &Params::new());
        let c = extremal_control(&sol, &g, None);
        let n = sol.grid.nx;
        for row in &c.sigma_star {
            assert!(row[2..n - 2].iter().all(|s| *s == 1.0));
        }
        let sol = solve("quadratic", &[("a".to_string(), -1.0)].into());
        let c = extremal_control(&sol, &g, None);
        for row in &c.sigma_star {
            assert!(row[2..n - 2].iter().all(|s| *s == 0.0));
        }
        for row in &c.sigma_star {
            assert!(row.iter().all(|s| *s == 0.0 || *s == 1.0));
        }
    }
}
