use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcore::{DriverSpec, GFunction1D, Grid1D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PdeForm {
    /// `∂_t u + G(∂²u) = 0`.
    GHeat,
    /// `∂_t u + G(∂²u + 2h(u, ∂u)) = 0`, the driver in the `g` slot.
    RegularizedBsde,
    /// The full nonlinear Feynman–Kac equation.
    MarkovianFbsde,
}

#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub grid: Grid1D,
    pub driver: DriverSpec,
    pub g: GFunction1D,
    pub form: PdeForm,
}

impl PdeProblem {
    pub fn new(grid: Grid1D, driver: DriverSpec, g: GFunction1D, form: PdeForm) -> Result<Self> {
        grid.validate()?;
        let s = driver.structure();
        match form {
            PdeForm::GHeat if !driver.is_pure_g_heat() => {
                return Err(Error::domain(
                    "G-heat form requires b = h = f = g = 0 and sigma = 1",
                ))
            }
            PdeForm::RegularizedBsde if !(s.b_zero && s.h_zero && s.f_zero && s.sigma_unit) => {
                return Err(Error::domain(
                    "regularized BSDE form requires b = h = f = 0 and sigma = 1",
                ))
            }
            _ => {}
        }
        Ok(Self {
            grid,
            driver,
            g,
            form,
        })
    }

    /// Uses `grid`'s space axis and horizon and derives `nt` from the CFL
    /// bound with the given safety factor.
    pub fn with_cfl(
        grid: Grid1D,
        driver: DriverSpec,
        g: GFunction1D,
        form: PdeForm,
        safety: f64,
    ) -> Result<Self> {
        let dt = cfl_timestep(&grid, &g, &driver, safety);
        Self::new(grid.with_time_step(dt), driver, g, form)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveMetadata {
    /// Stable step bound at safety 1.
    pub dt_bound: f64,
    /// `dt / dt_bound`.
    pub cfl_number: f64,
    /// `max |h + g_z σ|·dx / σ²` over nodes with `σ > 0`; the central
    /// first-order terms keep the scheme monotone only while this is ≤ 1.
    pub cell_peclet: f64,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Numeric solution on the grid. `u[k][i]` is the value at `(t_k, x_i)`;
/// `a_field[k][i]` is the argument of `G` evaluated on level `k`, which is
/// what drives the step from `t_k` back to `t_{k−1}`.
#[derive(Debug, Clone)]
pub struct PdeSolution {
    pub grid: Grid1D,
    pub g: GFunction1D,
    pub form: PdeForm,
    pub u: Vec<Vec<f64>>,
    pub a_field: Vec<Vec<f64>>,
    pub metadata: SolveMetadata,
}

impl PdeSolution {
    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    /// Time level containing `t` (left endpoint).
    pub fn level_at(&self, t: f64) -> usize {
        let k = ((t / self.dt()) + 1e-9).floor();
        (k.max(0.0) as usize).min(self.grid.nt)
    }

    /// Linear interpolation in `x` of a row of any field on this grid.
    pub fn interp_row(&self, row: &[f64], x: f64) -> Result<f64> {
        interp_on_grid(&self.grid, row, x)
    }

    /// `u(t, x)` with linear interpolation in both variables.
    pub fn value_at(&self, t: f64, x: f64) -> Result<f64> {
        let s = (t / self.dt()).clamp(0.0, self.grid.nt as f64);
        let k = (s.floor() as usize).min(self.grid.nt.saturating_sub(1));
        let w = s - k as f64;
        let lo = self.interp_row(&self.u[k], x)?;
        if w == 0.0 {
            return Ok(lo);
        }
        let hi = self.interp_row(&self.u[k + 1], x)?;
        Ok(lo * (1.0 - w) + hi * w)
    }

    /// `u(0, x)`.
    pub fn initial_value(&self, x: f64) -> Result<f64> {
        self.interp_row(&self.u[0], x)
    }

    pub fn node_of(&self, x: f64) -> usize {
        let g = &self.grid;
        (((x - g.x_min) / g.dx()).round().max(0.0) as usize).min(g.nx - 1)
    }
}

pub(crate) fn interp_on_grid(g: &Grid1D, row: &[f64], x: f64) -> Result<f64> {
    let tol = 1e-9 * g.dx();
    if !(x >= g.x_min - tol && x <= g.x_max + tol) {
        return Err(Error::OutOfRange {
            x,
            x_min: g.x_min,
            x_max: g.x_max,
        });
    }
    let s = ((x - g.x_min) / g.dx()).clamp(0.0, (g.nx - 1) as f64);
    let i = (s.floor() as usize).min(g.nx - 2);
    let w = s - i as f64;
    Ok(row[i] * (1.0 - w) + row[i + 1] * w)
}

fn max_over_grid(grid: &Grid1D, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut m: f64 = 0.0;
    for q in 0..=4 {
        let t = grid.horizon * q as f64 / 4.0;
        for i in 0..grid.nx {
            m = m.max(f(t, grid.x(i)).abs());
        }
    }
    m
}

/// Largest stable explicit step:
/// `safety·dx² / (max σ²·σ_high² + dx·(max|b| + σ_high²(max|h| + max|σ|·L_z)) + dx²·(1 + σ_high²)·L_y)`.
pub fn cfl_timestep(grid: &Grid1D, g: &GFunction1D, driver: &DriverSpec, safety: f64) -> f64 {
    let dx = grid.dx();
    let sh2 = g.sigma_high() * g.sigma_high();
    let sig = max_over_grid(grid, |t, x| driver.sigma.eval(t, x));
    let b = max_over_grid(grid, |t, x| driver.b.eval(t, x));
    let h = max_over_grid(grid, |t, x| driver.h.eval(t, x));
    let first_order = b + sh2 * (h + sig * driver.lip_z);
    let zeroth_order = (1.0 + sh2) * driver.lip_y;
    let denom = sig * sig * sh2 + dx * first_order + dx * dx * zeroth_order;
    if denom <= 0.0 {
        // Nothing moves: any step is stable.
        return grid.horizon;
    }
    safety.clamp(f64::MIN_POSITIVE, 1.0) * dx * dx / denom
}

struct Stepper<'a> {
    problem: &'a PdeProblem,
    xs: Vec<f64>,
    dx: f64,
}

impl Stepper<'_> {
    /// Argument of `G` on one level (`u` at time `t`).
    fn a_field(&self, u: &[f64], t: f64, a: &mut [f64]) {
        let d = &self.problem.driver;
        let n = u.len();
        let dx = self.dx;
        for i in 0..n {
            let x = self.xs[i];
            let (d2, d1) = if i == 0 {
                (0.0, (u[1] - u[0]) / dx)
            } else if i == n - 1 {
                (0.0, (u[n - 1] - u[n - 2]) / dx)
            } else {
                (
                    (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx),
                    (u[i + 1] - u[i - 1]) / (2.0 * dx),
                )
            };
            let sigma = d.sigma.eval(t, x);
            a[i] = sigma * sigma * d2
                + 2.0 * d.h.eval(t, x) * d1
                + 2.0 * d.g.eval(t, x, u[i], sigma * d1);
        }
    }

    /// One backward step from `u` at `t` to `out` at `t − dt`, given the
    /// level's `a` field.
    fn step(&self, u: &[f64], a: &[f64], t: f64, dt: f64, out: &mut [f64]) {
        let p = self.problem;
        let n = u.len();
        let dx = self.dx;
        for i in 1..n - 1 {
            let x = self.xs[i];
            let b = p.driver.b.eval(t, x);
            let upwind = if b > 0.0 {
                (u[i + 1] - u[i]) / dx
            } else {
                (u[i] - u[i - 1]) / dx
            };
            out[i] = u[i] + dt * (p.g.eval(a[i]) + b * upwind + p.driver.f.eval(t, x, u[i]));
        }
        out[0] = 2.0 * out[1] - out[2];
        out[n - 1] = 2.0 * out[n - 2] - out[n - 3];
    }
}

fn cell_peclet(problem: &PdeProblem) -> f64 {
    let d = &problem.driver;
    let grid = &problem.grid;
    let mut worst: f64 = 0.0;
    for q in 0..=4 {
        let t = grid.horizon * q as f64 / 4.0;
        for i in 0..grid.nx {
            let x = grid.x(i);
            let s = d.sigma.eval(t, x);
            if s != 0.0 {
                let drift = d.h.eval(t, x).abs() + d.lip_z * s.abs();
                worst = worst.max(drift * grid.dx() / (s * s));
            }
        }
    }
    worst
}

/// Backward explicit time stepping from `u(T, ·) = φ`.
///
/// Each interior node is updated as `u(t) = u(t+dt) + dt·[G(a) + b·D_up u + f]`
/// with `a = σ²D²u + 2hDu + 2g(t,x,u,σDu)` (central differences, lagged at
/// `t + dt`) and the drift term upwinded by the sign of `b`. Boundary nodes
/// use linear extrapolation (`∂²u = 0`).
pub fn solve_terminal_pde(problem: &PdeProblem) -> Result<PdeSolution> {
    let terminal: Vec<f64> = problem
        .grid
        .xs()
        .iter()
        .map(|x| problem.driver.phi.eval(*x))
        .collect();
    solve_from_terminal(problem, terminal)
}

/// As [`solve_terminal_pde`] with the terminal row given node by node
/// instead of through the driver's payoff.
pub fn solve_from_terminal(problem: &PdeProblem, terminal: Vec<f64>) -> Result<PdeSolution> {
    let start = Instant::now();
    let grid = problem.grid;
    grid.validate()?;
    let dt = grid.dt();
    let dt_bound = cfl_timestep(&grid, &problem.g, &problem.driver, 1.0);
    if dt > dt_bound * (1.0 + 1e-9) {
        return Err(Error::Cfl {
            dt,
            bound: dt_bound,
        });
    }
    let stepper = Stepper {
        problem,
        xs: grid.xs(),
        dx: grid.dx(),
    };
    let (nx, nt) = (grid.nx, grid.nt);
    if terminal.len() != nx {
        return Err(Error::Shape(format!(
            "terminal row has {} values for {nx} nodes",
            terminal.len()
        )));
    }
    let mut u = vec![vec![0.0; nx]; nt + 1];
    let mut a = vec![vec![0.0; nx]; nt + 1];
    u[nt] = terminal;
    check_finite(&u[nt], nt, &grid)?;
    for k in (0..nt).rev() {
        let t = grid.t(k + 1);
        let (lower, upper) = u.split_at_mut(k + 1);
        stepper.a_field(&upper[0], t, &mut a[k + 1]);
        stepper.step(&upper[0], &a[k + 1], t, dt, &mut lower[k]);
        check_finite(&lower[k], k, &grid)?;
    }
    let (first, _) = a.split_at_mut(1);
    stepper.a_field(&u[0], 0.0, &mut first[0]);
    Ok(PdeSolution {
        grid,
        g: problem.g,
        form: problem.form,
        u,
        a_field: a,
        metadata: SolveMetadata {
            dt_bound,
            cfl_number: dt / dt_bound,
            cell_peclet: cell_peclet(problem),
            wall_time: start.elapsed(),
        },
    })
}

fn check_finite(row: &[f64], level: usize, grid: &Grid1D) -> Result<()> {
    match row.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(node) => Err(Error::NonFinite {
            level,
            t: grid.t(level),
            node,
            x: grid.x(node),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::{preset_driver, Coefficient, Params, Payoff};
    use approx::assert_abs_diff_eq;

    fn g01() -> GFunction1D {
        GFunction1D::new(0.0, 1.0).unwrap()
    }

    fn heat(payoff: &str, params: &Params, nx: usize) -> PdeSolution {
        let driver = DriverSpec::g_heat(Payoff::preset(payoff, params).unwrap()).unwrap();
        let grid = Grid1D::centered(0.0, 1.0, 1.0, 2.0, nx).unwrap();
        let p = PdeProblem::with_cfl(grid, driver, g01(), PdeForm::GHeat, 0.9).unwrap();
        solve_terminal_pde(&p).unwrap()
    }

    #[test]
    fn cfl_examples() {
        let driver = preset_driver("zero", &Params::new()).unwrap();
        let grid = Grid1D::new(-1.0, 1.0, 21, 1.0, 1).unwrap();
        assert_abs_diff_eq!(
            cfl_timestep(&grid, &g01(), &driver, 0.9),
            0.009,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            cfl_timestep(&grid, &g01(), &driver, 1.0),
            0.01,
            epsilon = 1e-15
        );
        let geometric = DriverSpec::builder("geometric")
            .sigma(Coefficient::linear(1.0))
            .build()
            .unwrap();
        let grid = Grid1D::new(-2.0, 2.0, 41, 1.0, 1).unwrap();
        assert_abs_diff_eq!(
            cfl_timestep(&grid, &g01(), &geometric, 0.9),
            0.00225,
            epsilon = 1e-15
        );
    }

    #[test]
    fn convex_and_concave_quadratics() {
        let sol = heat("quadratic", &Params::new(), 201);
        assert_abs_diff_eq!(sol.initial_value(0.0).unwrap(), 1.0, epsilon = 1e-2);
        assert_eq!(sol.u[sol.grid.nt][37], sol.grid.x(37).powi(2));
        let neg: Params = [("a".to_string(), -1.0)].into();
        let sol = heat("quadratic", &neg, 201);
        assert_abs_diff_eq!(sol.initial_value(0.0).unwrap(), 0.0, epsilon = 1e-2);
    }

    #[test]
    fn refuses_cfl_violation() {
        let driver = preset_driver("quadratic", &Params::new()).unwrap();
        let grid = Grid1D::new(-5.0, 5.0, 101, 1.0, 10).unwrap();
        let p = PdeProblem::new(grid, driver, g01(), PdeForm::GHeat).unwrap();
        assert!(matches!(solve_terminal_pde(&p), Err(Error::Cfl { .. })));
    }

    #[test]
    fn form_validation() {
        let driver = preset_driver("linear-h", &[("c".to_string(), 0.5)].into()).unwrap();
        let grid = Grid1D::new(-5.0, 5.0, 101, 1.0, 1000).unwrap();
        assert!(PdeProblem::new(grid, driver.clone(), g01(), PdeForm::GHeat).is_err());
        assert!(PdeProblem::new(grid, driver, g01(), PdeForm::RegularizedBsde).is_ok());
        let kinked = preset_driver("kinked", &Params::new()).unwrap();
        assert!(PdeProblem::new(grid, kinked.clone(), g01(), PdeForm::RegularizedBsde).is_err());
        assert!(PdeProblem::new(grid, kinked, g01(), PdeForm::MarkovianFbsde).is_ok());
    }

    #[test]
    fn constants_are_preserved() {
        let c: Params = [("c".to_string(), 2.5)].into();
        let sol = heat("constant", &c, 101);
        for row in &sol.u {
            for v in row {
                assert_eq!(*v, 2.5);
            }
        }
    }

    #[test]
    fn reports_non_finite_values() {
        let blowup = Payoff::smooth(
            "blowup",
            |x| (x * 200.0).exp(),
            |x| 200.0 * (x * 200.0).exp(),
            |x| 4e4 * (x * 200.0).exp(),
            1e300,
            1,
        );
        let mut driver =
            DriverSpec::g_heat(Payoff::preset("zero", &Params::new()).unwrap()).unwrap();
        driver.phi = blowup;
        let grid = Grid1D::new(-5.0, 5.0, 101, 1.0, 1000).unwrap();
        let p = PdeProblem::new(grid, driver, g01(), PdeForm::GHeat).unwrap();
        assert!(matches!(
            solve_terminal_pde(&p),
            Err(Error::NonFinite { .. })
        ));
    }
}
