use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gcore::{DriverSpec, GFunction1D, Grid1D};
use crate::pde::{cfl_timestep, solve_terminal_pde, PdeForm, PdeProblem, PdeSolution};
use crate::scenario::PathBundle;

use super::kprocess::{reconstruct_k_from_solution, KPath};

const CFL_SAFETY: f64 = 0.9;

/// A G-BSDE in one of the two PDE-backed forms.
#[derive(Debug, Clone)]
pub struct BsdeProblem {
    pub driver: DriverSpec,
    pub g: GFunction1D,
    pub grid: Grid1D,
    pub form: PdeForm,
}

impl BsdeProblem {
    pub fn new(driver: DriverSpec, g: GFunction1D, grid: Grid1D, form: PdeForm) -> Result<Self> {
        if form == PdeForm::GHeat {
            return Err(Error::domain(
                "a G-BSDE uses the regularized-BSDE or the Markovian FBSDE form",
            ));
        }
        // Validates the form against the driver structure.
        PdeProblem::new(grid, driver.clone(), g, form)?;
        Ok(Self {
            driver,
            g,
            grid,
            form,
        })
    }

    pub fn with_grid(&self, grid: Grid1D) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }

    /// Direct solve with the (possibly degenerate) generator.
    pub fn solve_direct(&self) -> Result<PdeSolution> {
        let problem = PdeProblem::with_cfl(
            self.grid,
            self.driver.clone(),
            self.g,
            self.form,
            CFL_SAFETY,
        )?;
        solve_terminal_pde(&problem)
    }
}

/// One PDE solution per `ε` on a shared grid, with the extrapolated limit.
#[derive(Debug, Clone)]
pub struct BsdeSolutionFamily {
    pub problem: BsdeProblem,
    pub eps_schedule: Vec<f64>,
    pub solutions: Vec<PdeSolution>,
    /// `u0 = u_{ε₂} + (u_{ε₂} − u_{ε₁})·ε₂/(ε₁ − ε₂)` on every node, from the
    /// two finest levels (the finest level itself for a one-level family).
    pub u0: Vec<Vec<f64>>,
    pub diagnostics: FamilyDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyDiagnostics {
    /// `sup_x |u_{ε_k} − u_{ε_{k+1}}|(0, ·)` over the core window.
    pub deltas: Vec<f64>,
    pub dt: f64,
    pub nt: usize,
}

impl BsdeSolutionFamily {
    pub fn grid(&self) -> &Grid1D {
        &self.solutions[0].grid
    }

    /// `u0(0, x)`.
    pub fn u0_at(&self, x: f64) -> Result<f64> {
        self.solutions[0].interp_row(&self.u0[0], x)
    }

    /// `u_{ε_i}(0, x)`.
    pub fn value_at(&self, i: usize, x: f64) -> Result<f64> {
        self.solutions[i].initial_value(x)
    }
}

pub(crate) fn sup_core_delta(a: &[f64], b: &[f64], grid: &Grid1D) -> f64 {
    grid.core_range()
        .map(|i| (a[i] - b[i]).abs())
        .fold(0.0, f64::max)
}

/// Solves the regularized equation for every `ε` with `G_ε` of interval
/// `[ε, √(σ_high² + ε²)]`. All levels share the time step of the largest `ε`.
pub fn solve_gbsde(
    problem: &BsdeProblem,
    eps_schedule: &[f64],
    exec: Execution,
) -> Result<BsdeSolutionFamily> {
    if eps_schedule.is_empty() || eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain(format!(
            "ε schedule {eps_schedule:?} must be non-empty and strictly decreasing"
        )));
    }
    let generators = eps_schedule
        .iter()
        .map(|e| problem.g.regularize(*e))
        .collect::<Result<Vec<_>>>()?;
    let dt = generators
        .iter()
        .map(|g| cfl_timestep(&problem.grid, g, &problem.driver, CFL_SAFETY))
        .fold(f64::INFINITY, f64::min);
    let grid = problem.grid.with_time_step(dt);
    let solutions = exec.try_map(generators.len(), |i| {
        let p = PdeProblem::new(grid, problem.driver.clone(), generators[i], problem.form)?;
        solve_terminal_pde(&p)
    })?;
    let deltas = solutions
        .windows(2)
        .map(|w| sup_core_delta(&w[0].u[0], &w[1].u[0], &grid))
        .collect();
    let u0 = match solutions.len() {
        1 => solutions[0].u.clone(),
        n => {
            let (e1, e2) = (eps_schedule[n - 2], eps_schedule[n - 1]);
            let w = e2 / (e1 - e2);
            solutions[n - 1]
                .u
                .iter()
                .zip(&solutions[n - 2].u)
                .map(|(fine, coarse)| {
                    fine.iter()
                        .zip(coarse)
                        .map(|(f, c)| f + (f - c) * w)
                        .collect()
                })
                .collect()
        }
    };
    Ok(BsdeSolutionFamily {
        problem: problem.clone(),
        eps_schedule: eps_schedule.to_vec(),
        solutions,
        u0,
        diagnostics: FamilyDiagnostics {
            deltas,
            dt: grid.dt(),
            nt: grid.nt,
        },
    })
}

/// `K` along the bundle's paths for the `eps_index`-th level.
pub fn reconstruct_k(
    family: &BsdeSolutionFamily,
    eps_index: usize,
    bundle: &PathBundle,
    x_paths: &[Vec<f64>],
) -> Result<Vec<KPath>> {
    let sol = family
        .solutions
        .get(eps_index)
        .ok_or_else(|| Error::domain(format!("no ε level {eps_index}")))?;
    reconstruct_k_from_solution(sol, bundle, x_paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::{preset_driver, Params};
    use crate::scenario::{forward_sde, simulate_paths, McSpec, VolatilityControl};
    use approx::assert_abs_diff_eq;

    fn g01() -> GFunction1D {
        GFunction1D::new(0.0, 1.0).unwrap()
    }

    fn grid() -> Grid1D {
        Grid1D::centered(0.0, 1.0, 1.0, 2.0, 201).unwrap()
    }

    fn linear_h(c: f64) -> BsdeProblem {
        let d = preset_driver("linear-h", &[("c".to_string(), c)].into()).unwrap();
        BsdeProblem::new(d, g01(), grid(), PdeForm::RegularizedBsde).unwrap()
    }

    #[test]
    fn extrapolation_approaches_direct_degenerate_solve() {
        let d = preset_driver("sine-gz", &Default::default()).unwrap();
        let p = BsdeProblem::new(d, g01(), grid(), PdeForm::RegularizedBsde).unwrap();
        let direct = p.solve_direct().unwrap();
        let f = solve_gbsde(&p, &[0.2, 0.1, 0.05], Execution::default()).unwrap();
        let core = grid().core_range();
        let gap = |row: &[f64]| {
            core.clone()
                .map(|i| (row[i] - direct.u[0][i]).abs())
                .fold(0.0, f64::max)
        };
        let raw: Vec<f64> = f.solutions.iter().map(|s| gap(&s.u[0])).collect();
        // Smooth data: the raw levels approach the direct solve like ε².
        for w in raw.windows(2) {
            assert!((0.2..0.3).contains(&(w[1] / w[0])), "{raw:?}");
        }
        let last_delta = f.diagnostics.deltas[1];
        assert!(
            gap(&f.u0[0]) <= last_delta,
            "{} vs {last_delta}",
            gap(&f.u0[0])
        );
    }

    #[test]
    fn regularized_quadratic() {
        let f = solve_gbsde(&linear_h(0.0), &[0.1], Execution::default()).unwrap();
        assert_abs_diff_eq!(f.value_at(0, 0.0).unwrap(), 1.01, epsilon = 1e-2);
    }

    #[test]
    fn extrapolated_limit_with_constant_h() {
        let f = solve_gbsde(&linear_h(0.5), &[0.2, 0.1, 0.05], Execution::default()).unwrap();
        assert_abs_diff_eq!(f.u0_at(0.0).unwrap(), 1.5, epsilon = 2e-2);
        assert_eq!(f.diagnostics.deltas.len(), 2);
        let terminal = |i: usize| f.solutions[i].u[f.diagnostics.nt].clone();
        assert_eq!(terminal(0), terminal(2));
    }

    #[test]
    fn schedule_validation() {
        let p = linear_h(0.5);
        assert!(solve_gbsde(&p, &[0.1, 0.2], Execution::Sequential).is_err());
        assert!(solve_gbsde(&p, &[], Execution::Sequential).is_err());
        assert!(solve_gbsde(&p, &[1.5, 0.1], Execution::Sequential).is_err());
        let d = preset_driver("quadratic", &Params::new()).unwrap();
        assert!(BsdeProblem::new(d, g01(), grid(), PdeForm::GHeat).is_err());
    }

    #[test]
    fn k_under_regularized_low_control() {
        let eps = 0.1;
        let f = solve_gbsde(&linear_h(0.0), &[eps], Execution::default()).unwrap();
        let g_eps = f.solutions[0].g;
        let mc = McSpec::new(50, 100, 8);
        let b = simulate_paths(&VolatilityControl::Constant(eps), &g_eps, &mc, 0.0, 1.0).unwrap();
        let x = forward_sde(&f.problem.driver, 0.0, &b).unwrap();
        let ks = reconstruct_k(&f, 0, &b, &x).unwrap();
        for k in &ks {
            assert_eq!(k.k[0], 0.0);
            assert_abs_diff_eq!(k.terminal(), -1.0, epsilon = 1e-2);
        }
    }
}
