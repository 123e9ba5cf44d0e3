use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gcore::Grid1D;
use crate::gexpect::{lattice_markov, LatticeSpec};
use crate::pde::{derivatives, PdeSolution};
use crate::report::fit_slope;

use super::family::{sup_core_delta, BsdeProblem, BsdeSolutionFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub eps_next: f64,
    /// `sup_x |u_ε − u_ε'|(0, ·)` over the core window.
    pub delta: f64,
    /// `|ε − ε'| + ε² + ε'²`.
    pub gap: f64,
    /// `|ε − ε'|^p + ε^{2p} + ε'^{2p}`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub p: f64,
    pub rows: Vec<ConvergenceRow>,
    /// `δ_{k+1}/δ_k`.
    pub shrink_factors: Vec<f64>,
    /// Log-log slope of `δ` against the gap.
    pub rate: f64,
    /// Geometric-mean fit of `δ^p / bound`.
    pub fitted_c: f64,
    /// Rows with `δ^p > 1.2·C·bound`.
    pub violations: Vec<usize>,
}

/// Consecutive sup-norm differences of the family against
/// `C(|ε − ε'|^p + ε^{2p} + ε'^{2p})`.
pub fn convergence_report(family: &BsdeSolutionFamily, p: f64) -> Result<ConvergenceReport> {
    let eps = &family.eps_schedule;
    if eps.len() < 3 {
        return Err(Error::domain(format!(
            "convergence report needs at least 3 ε levels, got {}",
            eps.len()
        )));
    }
    let grid = *family.grid();
    let rows: Vec<ConvergenceRow> = (0..eps.len() - 1)
        .map(|i| {
            let (e, f) = (eps[i], eps[i + 1]);
            ConvergenceRow {
                eps: e,
                eps_next: f,
                delta: sup_core_delta(
                    &family.solutions[i].u[0],
                    &family.solutions[i + 1].u[0],
                    &grid,
                ),
                gap: (e - f).abs() + e * e + f * f,
                bound: (e - f).abs().powf(p) + e.powf(2.0 * p) + f.powf(2.0 * p),
            }
        })
        .collect();
    let shrink_factors = rows.windows(2).map(|w| w[1].delta / w[0].delta).collect();
    let logs: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.delta > 0.0)
        .map(|r| (r.gap.ln(), r.delta.ln()))
        .collect();
    let rate = if logs.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = logs.iter().copied().unzip();
        fit_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.delta > 0.0)
        .map(|r| (r.delta.powf(p) / r.bound).ln())
        .collect();
    let fitted_c = if ratios.is_empty() {
        0.0
    } else {
        (ratios.iter().sum::<f64>() / ratios.len() as f64).exp()
    };
    let violations = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.delta.powf(p) > 1.2 * fitted_c * r.bound)
        .map(|(i, _)| i)
        .collect();
    Ok(ConvergenceReport {
        p,
        rows,
        shrink_factors,
        rate,
        fitted_c,
        violations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvatureScan {
    /// `(ε, min ∂²_xx u_ε)` over interior nodes and all times.
    pub rows: Vec<(f64, f64)>,
    /// `max_ε |min| ≤ 2·|min at the coarsest ε|`.
    pub uniform: bool,
}

pub fn second_derivative_scan(family: &BsdeSolutionFamily) -> Result<CurvatureScan> {
    let rows = family
        .eps_schedule
        .iter()
        .zip(&family.solutions)
        .map(|(e, sol)| {
            let d = derivatives(sol)?;
            let n = sol.grid.nx;
            let min = d
                .uxx
                .iter()
                .flat_map(|row| row[1..n - 1].iter().copied())
                .fold(f64::INFINITY, f64::min);
            Ok((*e, min))
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = rows[0].1.abs();
    let worst = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    Ok(CurvatureScan {
        uniform: worst <= 2.0 * reference.max(f64::MIN_POSITIVE),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SemiconvexityReport {
    /// Smallest `C ≥ 0` with second differences `≥ −C(1 + |x|^{2m}) − 1e-8`.
    pub c: f64,
    pub m: u32,
    /// Largest second difference magnitude near the origin, for reference.
    pub max_second_difference: f64,
    pub violations: usize,
}

/// `Δ⁻¹[D∂_x u(t, x + Δ) − D∂_x u(t, x)]` with `Δ = dx` and central `D∂_x`,
/// over the core window and all levels.
pub fn semiconvexity_scan(problem: &BsdeProblem, sol: &PdeSolution) -> Result<SemiconvexityReport> {
    if !problem.driver.has_second_derivatives() {
        return Err(Error::domain(format!(
            "driver '{}' does not supply the second derivatives",
            problem.driver.name
        )));
    }
    const TOL: f64 = 1e-8;
    let m = problem.driver.constants.m;
    let grid = sol.grid;
    let dx = grid.dx();
    let core = grid.core_range();
    let mut c: f64 = 0.0;
    let mut max_sd: f64 = 0.0;
    let second = |row: &[f64], i: usize| {
        let d0 = (row[i + 1] - row[i - 1]) / (2.0 * dx);
        let d1 = (row[i + 2] - row[i]) / (2.0 * dx);
        (d1 - d0) / dx
    };
    for row in &sol.u {
        for i in core.start..core.end.min(grid.nx - 2) {
            let sd = second(row, i);
            let weight = 1.0 + grid.x(i).abs().powi(2 * m as i32);
            c = c.max((-sd - TOL).max(0.0) / weight);
            max_sd = max_sd.max(sd.abs());
        }
    }
    let violations = sol
        .u
        .iter()
        .flat_map(|row| {
            (core.start..core.end.min(grid.nx - 2)).filter(move |i| {
                second(row, *i) < -c * (1.0 + grid.x(*i).abs().powi(2 * m as i32)) - TOL
            })
        })
        .count();
    Ok(SemiconvexityReport {
        c,
        m,
        max_second_difference: max_sd,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityLevel {
    pub nx: usize,
    /// `sup_x |u¹ − u²|(0, ·)` over the core window.
    pub sup_delta: f64,
    /// `max_x |u¹ − u²|(0, x)^p / rhs(x)` over the probe points.
    pub fitted_c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub p: f64,
    pub levels: Vec<StabilityLevel>,
    /// Fitted constants within a factor 2 of each other.
    pub stable: bool,
}

/// Probes of the stability estimate `|Ŷ_t|^p ≤ C·Ê_t[|ξ̂|^p + (∫|f̂|ds)^p + (∫|ĝ|d⟨B⟩)^p]`.
///
/// The terminal term is an exact lattice G-expectation along `x + σB`; the
/// two integral terms are replaced by their deterministic upper bounds
/// `(T·sup|f̂|)^p` and `(σ_high²T·sup|ĝ|)^p` over the grid, with `f̂`, `ĝ`
/// evaluated on the second solution. Both problems need constant `σ` and
/// `b = h = 0`.
pub fn stability_check(
    first: &BsdeProblem,
    second: &BsdeProblem,
    p: f64,
    refinements: usize,
) -> Result<StabilityReport> {
    if first.grid != second.grid || first.g != second.g {
        return Err(Error::domain(
            "stability check needs a shared grid and generator",
        ));
    }
    let sigma = constant_sigma(first)?;
    if constant_sigma(second)? != sigma {
        return Err(Error::domain(
            "stability check needs the same σ in both problems",
        ));
    }
    let probes = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let mut grid = first.grid;
    let mut levels = Vec::with_capacity(refinements);
    for _ in 0..refinements.max(1) {
        let s1 = first.with_grid(grid).solve_direct()?;
        let s2 = second.with_grid(grid).solve_direct()?;
        let sup_delta = sup_core_delta(&s1.u[0], &s2.u[0], &s1.grid);
        let integral_terms = driver_gap_bound(first, second, &s2)?;
        let horizon = grid.horizon;
        let spec = LatticeSpec::new(64, horizon, &first.g)?;
        let mut fitted_c: f64 = 0.0;
        for x0 in probes {
            let phi_gap = |b: f64| {
                let x = x0 + sigma * b;
                (first.driver.phi.eval(x) - second.driver.phi.eval(x))
                    .abs()
                    .powf(p)
            };
            let terminal = lattice_markov(&spec, &first.g, phi_gap, |_, _, _| 0.0)?.value_at_root();
            let rhs = terminal + integral_terms.powf(p);
            let lhs = (s1.initial_value(x0)? - s2.initial_value(x0)?)
                .abs()
                .powf(p);
            if lhs > 0.0 {
                fitted_c = fitted_c.max(lhs / rhs);
            }
        }
        levels.push(StabilityLevel {
            nx: grid.nx,
            sup_delta,
            fitted_c,
        });
        grid = grid.refined();
    }
    let cs: Vec<f64> = levels.iter().map(|l| l.fitted_c).collect();
    let (lo, hi) = (
        cs.iter().copied().fold(f64::INFINITY, f64::min),
        cs.iter().copied().fold(0.0, f64::max),
    );
    let stable = hi == 0.0 || (lo > 0.0 && hi / lo < 2.0);
    Ok(StabilityReport { p, levels, stable })
}

fn constant_sigma(problem: &BsdeProblem) -> Result<f64> {
    let s = problem.driver.structure();
    if !(s.sigma_constant && s.b_zero && s.h_zero) {
        return Err(Error::domain(format!(
            "driver '{}' needs constant σ and b = h = 0 for the lattice comparison",
            problem.driver.name
        )));
    }
    Ok(problem.driver.sigma.eval(0.0, 0.0))
}

/// `T·sup|f¹ − f²| + σ_high²T·sup|g¹ − g²|` at `(t, x, u², σ∂_x u²)`.
fn driver_gap_bound(first: &BsdeProblem, second: &BsdeProblem, sol: &PdeSolution) -> Result<f64> {
    let d = derivatives(sol)?;
    let grid = sol.grid;
    let (d1, d2) = (&first.driver, &second.driver);
    let mut f_gap: f64 = 0.0;
    let mut g_gap: f64 = 0.0;
    for (k, (row, ux)) in sol.u.iter().zip(&d.ux).enumerate() {
        let t = grid.t(k);
        for i in grid.core_range() {
            let x = grid.x(i);
            let z = d2.sigma.eval(t, x) * ux[i];
            f_gap = f_gap.max((d1.f.eval(t, x, row[i]) - d2.f.eval(t, x, row[i])).abs());
            g_gap = g_gap.max((d1.g.eval(t, x, row[i], z) - d2.g.eval(t, x, row[i], z)).abs());
        }
    }
    let sh2 = first.g.sigma_high().powi(2);
    Ok(grid.horizon * (f_gap + sh2 * g_gap))
}

/// `|u(t₁, x₀) − Ê[u(t₂, X_{t₂}) + ∫f ds + ∫g d⟨B⟩]|` with the right side
/// computed on a trinomial lattice over `[t₁, t₂]` started at `x₀`, using
/// the `t₂` slice of `sol` as terminal data and `Y`, `Z` read from `sol`.
/// Needs constant `σ` and `b = h = 0`, so that `X = x₀ + σB`.
pub fn dynamic_programming_check(
    problem: &BsdeProblem,
    sol: &PdeSolution,
    t1: f64,
    t2: f64,
    x0: f64,
    steps: usize,
) -> Result<f64> {
    let horizon = sol.grid.horizon;
    if !(0.0 <= t1 && t1 <= t2 && t2 <= horizon) {
        return Err(Error::domain(format!(
            "need 0 ≤ t1 ≤ t2 ≤ T, got t1 = {t1}, t2 = {t2}"
        )));
    }
    if t1 == t2 {
        return Ok(0.0);
    }
    let sigma = constant_sigma(problem)?;
    let d = &problem.driver;
    let fields = derivatives(sol)?;
    let spec = LatticeSpec::new(steps, t2 - t1, &sol.g)?;
    let reach = steps as f64 * spec.dx * sigma.abs();
    if x0 - reach < sol.grid.x_min || x0 + reach > sol.grid.x_max {
        return Err(Error::domain(format!(
            "lattice from x0 = {x0} reaches [{:.3}, {:.3}], beyond the grid [{}, {}]; use fewer steps or a wider grid",
            x0 - reach,
            x0 + reach,
            sol.grid.x_min,
            sol.grid.x_max
        )));
    }
    let lookup = |row: &[f64], x: f64| sol.interp_row(row, x);
    let k2 = sol.level_at(t2);
    // Out-of-range lookups surface as NaN and are reported below.
    let terminal = |b: f64| lookup(&sol.u[k2], x0 + sigma * b).unwrap_or(f64::NAN);
    let running = |s: f64, b: f64, vol: f64| {
        let t = t1 + s;
        let x = x0 + sigma * b;
        let k = sol.level_at(t);
        let y = lookup(&sol.u[k], x).unwrap_or(f64::NAN);
        let z = sigma * lookup(&fields.ux[k], x).unwrap_or(f64::NAN);
        (d.f.eval(t, x, y) + d.g.eval(t, x, y, z) * vol * vol) * spec.dt
    };
    let value = lattice_markov(&spec, &sol.g, terminal, running)?.value_at_root();
    if !value.is_finite() {
        return Err(Error::OutOfRange {
            x: x0,
            x_min: sol.grid.x_min,
            x_max: sol.grid.x_max,
        });
    }
    Ok((sol.value_at(t1, x0)? - value).abs())
}

/// Solves `problem` on `grid` and its refinements; used by experiments that
/// check stability of fitted constants.
pub fn refinement_ladder(problem: &BsdeProblem, levels: usize) -> Result<Vec<PdeSolution>> {
    let mut grids: Vec<Grid1D> = vec![problem.grid];
    for i in 1..levels {
        grids.push(grids[i - 1].refined());
    }
    Execution::default().try_map(grids.len(), |i| problem.with_grid(grids[i]).solve_direct())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbsde::solve_gbsde;
    use crate::gcore::{preset_driver, GFunction1D, Params};
    use crate::pde::PdeForm;

    fn problem(name: &str, params: &[(&str, f64)], form: PdeForm) -> BsdeProblem {
        let params: Params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        let grid = Grid1D::centered(0.0, 1.0, 1.0, 2.0, 121).unwrap();
        BsdeProblem::new(preset_driver(name, &params).unwrap(), g, grid, form).unwrap()
    }

    #[test]
    fn convergence_rows_follow_closed_form() {
        let p = problem("linear-h", &[("c", 0.5)], PdeForm::RegularizedBsde);
        let fam = solve_gbsde(&p, &[0.2, 0.1, 0.05], Execution::Sequential).unwrap();
        let rep = convergence_report(&fam, 1.0).unwrap();
        for r in &rep.rows {
            let exact = (r.eps * r.eps - r.eps_next * r.eps_next) * 1.5;
            assert!((r.delta - exact).abs() < 1e-10, "{} vs {exact}", r.delta);
        }
        assert!((rep.shrink_factors[0] - 0.25).abs() < 1e-9);
        assert!(convergence_report(
            &solve_gbsde(&p, &[0.2, 0.1], Execution::Sequential).unwrap(),
            1.0
        )
        .is_err());
    }

    #[test]
    fn convex_solution_needs_no_semiconvexity_constant() {
        let p = problem("quadratic", &[], PdeForm::MarkovianFbsde);
        let r = semiconvexity_scan(&p, &p.solve_direct().unwrap()).unwrap();
        assert_eq!(r.c, 0.0);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn identical_problems_are_trivially_stable() {
        let p = problem("smooth-bump", &[], PdeForm::MarkovianFbsde);
        let r = stability_check(&p, &p, 2.0, 2).unwrap();
        assert!(r.stable);
        assert!(r
            .levels
            .iter()
            .all(|l| l.sup_delta == 0.0 && l.fitted_c == 0.0));
        let k = problem("kinked", &[], PdeForm::MarkovianFbsde);
        assert!(stability_check(&k, &k, 2.0, 1).is_err());
    }

    #[test]
    fn dynamic_programming_identity() {
        let p = problem("sine-gz", &[], PdeForm::RegularizedBsde);
        let fam = solve_gbsde(&p, &[0.1], Execution::Sequential).unwrap();
        let sol = &fam.solutions[0];
        for x in [-0.5, 0.0, 0.5] {
            let gap = dynamic_programming_check(&p, sol, 0.25, 0.75, x, 32).unwrap();
            assert!(gap < 2e-3, "x = {x}: gap {gap}");
        }
        assert_eq!(
            dynamic_programming_check(&p, sol, 0.5, 0.5, 0.0, 8).unwrap(),
            0.0
        );
        assert!(dynamic_programming_check(&p, sol, 0.0, 1.0, 0.0, 400).is_err());
        assert!(dynamic_programming_check(&p, sol, 0.75, 0.25, 0.0, 8).is_err());
    }
}
