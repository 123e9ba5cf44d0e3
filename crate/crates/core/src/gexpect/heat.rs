use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gcore::{CylinderFunctional, DriverSpec, GFunction1D, Grid1D, Params, Payoff};
use crate::pde::{solve_from_terminal, solve_terminal_pde, PdeForm, PdeProblem};

/// Largest number of cylinder times handled by the nested recursion.
pub const MAX_CYLINDER_TIMES: usize = 4;

const CFL_SAFETY: f64 = 0.9;

fn heat_driver() -> &'static DriverSpec {
    static DRIVER: OnceLock<DriverSpec> = OnceLock::new();
    DRIVER.get_or_init(|| {
        DriverSpec::g_heat(Payoff::preset("zero", &Params::new()).expect("zero payoff"))
            .expect("G-heat driver")
    })
}

/// `Ê[φ(B_T)]` as `u(0, 0)` of the G-heat equation on `grid` (the horizon
/// is replaced by `horizon`, `nt` by the CFL step).
pub fn gexpect_terminal(phi: &Payoff, horizon: f64, g: &GFunction1D, grid: &Grid1D) -> Result<f64> {
    let driver = heat_driver().with_payoff(phi.clone())?;
    let problem = PdeProblem::with_cfl(
        grid.with_horizon(horizon),
        driver,
        *g,
        PdeForm::GHeat,
        CFL_SAFETY,
    )?;
    solve_terminal_pde(&problem)?.initial_value(0.0)
}

/// `Ê[v(B_s)]` for a tabulated `v` on `grid` with `s = grid.horizon`.
pub fn gexpect_row(row: Vec<f64>, g: &GFunction1D, grid: &Grid1D) -> Result<f64> {
    let problem =
        PdeProblem::with_cfl(*grid, heat_driver().clone(), *g, PdeForm::GHeat, CFL_SAFETY)?;
    solve_from_terminal(&problem, row)?.initial_value(0.0)
}

/// One grid per increment, each centred at 0 with the stage length as
/// horizon.
pub fn default_stage_grids(
    x: &CylinderFunctional,
    g: &GFunction1D,
    pad: f64,
    nx: usize,
) -> Result<Vec<Grid1D>> {
    (0..x.len())
        .map(|i| Grid1D::centered(0.0, g.sigma_high(), x.stage_length(i), pad, nx))
        .collect()
}

fn check_stage_grids(x: &CylinderFunctional, grids: &[Grid1D]) -> Result<()> {
    if x.len() > MAX_CYLINDER_TIMES {
        return Err(Error::domain(format!(
            "cylinder recursion supports at most {MAX_CYLINDER_TIMES} times, got {}",
            x.len()
        )));
    }
    if grids.len() != x.len() {
        return Err(Error::Shape(format!(
            "{} stage grids for {} cylinder times",
            grids.len(),
            x.len()
        )));
    }
    for (i, grid) in grids.iter().enumerate() {
        grid.validate()?;
        if (grid.horizon - x.stage_length(i)).abs() > 1e-12 * x.horizon() {
            return Err(Error::domain(format!(
                "stage grid {i} has horizon {} but the stage lasts {}",
                grid.horizon,
                x.stage_length(i)
            )));
        }
    }
    // Sampled Lipschitz smoke test over the stage grids' extent.
    let radius = grids
        .iter()
        .map(|g| g.x_max.abs().max(g.x_min.abs()))
        .fold(0.0, f64::max);
    x.check_lipschitz(radius, 1e6)
}

struct Recursion<'a> {
    x: &'a CylinderFunctional,
    g: &'a GFunction1D,
    grids: &'a [Grid1D],
    exec: Execution,
}

impl Recursion<'_> {
    /// `φ_i(prefix)` with `i = prefix.len()`.
    fn value(&self, prefix: &[f64]) -> Result<f64> {
        let i = prefix.len();
        if i == self.x.len() {
            return Ok(self.x.eval(prefix));
        }
        let grid = &self.grids[i];
        // Parallelism is spent on the outermost level only.
        let exec = if i == 0 {
            self.exec
        } else {
            Execution::Sequential
        };
        let row = exec.try_map(grid.nx, |j| {
            let mut next = prefix.to_vec();
            next.push(grid.x(j));
            self.value(&next)
        })?;
        gexpect_row(row, self.g, grid)
    }
}

/// `Ê[X]` by the backward recursion `φ_{i}(x₁..x_i) = Ê[φ_{i+1}(x₁..x_i, B_{t_{i+1}} − B_{t_i})]`,
/// one G-heat solve per node of the outer variables.
pub fn gexpect_cylinder(
    x: &CylinderFunctional,
    g: &GFunction1D,
    grids: &[Grid1D],
    exec: Execution,
) -> Result<f64> {
    check_stage_grids(x, grids)?;
    Recursion { x, g, grids, exec }.value(&[])
}

/// `Ê_{t_i}[X]` tabulated on the product of the first `i` stage grids.
#[derive(Debug, Clone)]
pub struct ConditionalTable {
    pub stage: usize,
    pub grids: Vec<Grid1D>,
    /// Row-major, last coordinate fastest.
    pub values: Vec<f64>,
}

impl ConditionalTable {
    fn shape(&self) -> Vec<usize> {
        self.grids.iter().map(|g| g.nx).collect()
    }

    /// Value at grid nodes `idx`.
    pub fn at(&self, idx: &[usize]) -> f64 {
        let flat = idx
            .iter()
            .zip(self.shape())
            .fold(0, |acc, (i, n)| acc * n + i);
        self.values[flat]
    }

    /// Multilinear interpolation at `(x₁, …, x_i)`.
    pub fn value_at(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.stage {
            return Err(Error::Shape(format!(
                "table of stage {} evaluated at {} coordinates",
                self.stage,
                point.len()
            )));
        }
        let mut corners: Vec<(usize, f64)> = Vec::with_capacity(self.stage);
        for (grid, x) in self.grids.iter().zip(point) {
            if *x < grid.x_min - 1e-9 * grid.dx() || *x > grid.x_max + 1e-9 * grid.dx() {
                return Err(Error::OutOfRange {
                    x: *x,
                    x_min: grid.x_min,
                    x_max: grid.x_max,
                });
            }
            let s = ((x - grid.x_min) / grid.dx()).clamp(0.0, (grid.nx - 1) as f64);
            let i = (s.floor() as usize).min(grid.nx - 2);
            corners.push((i, s - i as f64));
        }
        let mut total = 0.0;
        for mask in 0..(1usize << self.stage) {
            let mut weight = 1.0;
            let idx: Vec<usize> = corners
                .iter()
                .enumerate()
                .map(|(d, (i, w))| {
                    if mask >> d & 1 == 1 {
                        weight *= w;
                        i + 1
                    } else {
                        weight *= 1.0 - w;
                        *i
                    }
                })
                .collect();
            if weight != 0.0 {
                total += weight * self.at(&idx);
            }
        }
        Ok(total)
    }

    /// `Ê_{t_{i−1}}` of this table: one more backward stage.
    pub fn reduce(&self, g: &GFunction1D, all_grids: &[Grid1D]) -> Result<ConditionalTable> {
        if self.stage == 0 {
            return Err(Error::domain("stage-0 table cannot be reduced further"));
        }
        let inner = all_grids[self.stage - 1];
        let outer: Vec<Grid1D> = self.grids[..self.stage - 1].to_vec();
        let outer_count: usize = outer.iter().map(|g| g.nx).product();
        let values = (0..outer_count)
            .map(|o| {
                let row = self.values[o * inner.nx..(o + 1) * inner.nx].to_vec();
                gexpect_row(row, g, &inner)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionalTable {
            stage: self.stage - 1,
            grids: outer,
            values,
        })
    }
}

/// `Ê_{t_i}[X] = φ_i(x₁, …, x_i)` on the first `i` stage grids.
pub fn conditional_gexpect(
    x: &CylinderFunctional,
    stage: usize,
    g: &GFunction1D,
    grids: &[Grid1D],
    exec: Execution,
) -> Result<ConditionalTable> {
    check_stage_grids(x, grids)?;
    if stage > x.len() {
        return Err(Error::domain(format!(
            "stage {stage} exceeds the {} cylinder times",
            x.len()
        )));
    }
    let outer: Vec<Grid1D> = grids[..stage].to_vec();
    let count: usize = outer.iter().map(|g| g.nx).product();
    let rec = Recursion {
        x,
        g,
        grids,
        exec: Execution::Sequential,
    };
    let values = exec.try_map(count, |flat| {
        let mut rem = flat;
        let mut prefix = vec![0.0; stage];
        for d in (0..stage).rev() {
            prefix[d] = outer[d].x(rem % outer[d].nx);
            rem /= outer[d].nx;
        }
        rec.value(&prefix)
    })?;
    Ok(ConditionalTable {
        stage,
        grids: outer,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g01() -> GFunction1D {
        GFunction1D::new(0.0, 1.0).unwrap()
    }

    fn grid() -> Grid1D {
        Grid1D::centered(0.0, 1.0, 1.0, 2.0, 201).unwrap()
    }

    #[test]
    fn terminal_closed_forms() {
        let p = |name: &str| Payoff::preset(name, &Params::new()).unwrap();
        assert_abs_diff_eq!(
            gexpect_terminal(&p("quadratic"), 1.0, &g01(), &grid()).unwrap(),
            1.0,
            epsilon = 1e-2
        );
        assert_abs_diff_eq!(
            gexpect_terminal(&p("linear"), 1.0, &g01(), &grid()).unwrap(),
            0.0,
            epsilon = 1e-3
        );
        assert_abs_diff_eq!(
            gexpect_terminal(&p("abs"), 1.0, &g01(), &grid()).unwrap(),
            (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-2
        );
    }

    fn two_stage(psi: fn(&[f64]) -> f64) -> (CylinderFunctional, Vec<Grid1D>) {
        let x = CylinderFunctional::new(vec![0.5, 1.0], psi).unwrap();
        let grids = default_stage_grids(&x, &g01(), 1.5, 61).unwrap();
        (x, grids)
    }

    #[test]
    fn cylinder_closed_forms() {
        type Psi = fn(&[f64]) -> f64;
        let cases: [(Psi, f64); 3] = [
            (|v| v[0] + v[1], 0.0),
            (|v| v[0] * v[0] + v[1] * v[1], 1.0),
            (|v| v[0] * v[1], 0.0),
        ];
        for (psi, expected) in cases {
            let (x, grids) = two_stage(psi);
            let v = gexpect_cylinder(&x, &g01(), &grids, Execution::default()).unwrap();
            assert_abs_diff_eq!(v, expected, epsilon = 2e-2);
        }
    }

    #[test]
    fn conditional_tables() {
        let (x, grids) = two_stage(|v| v[1] * v[1]);
        let t = conditional_gexpect(&x, 1, &g01(), &grids, Execution::default()).unwrap();
        assert!(t.values.iter().all(|v| (v - 0.5).abs() <= 2e-2));

        let (x, grids) = two_stage(|v| v[0]);
        let t = conditional_gexpect(&x, 1, &g01(), &grids, Execution::default()).unwrap();
        for (j, v) in t.values.iter().enumerate() {
            assert_abs_diff_eq!(*v, grids[0].x(j), epsilon = 1e-12);
        }

        let (x, grids) = two_stage(|v| v[0] * v[1]);
        let t = conditional_gexpect(&x, 1, &g01(), &grids, Execution::default()).unwrap();
        let worst = t.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-2, "max |table| = {worst}");
    }

    #[test]
    fn tower_property() {
        let (x, grids) = two_stage(|v| (v[0] + v[1]).cos() + 0.3 * v[0].abs());
        let direct = gexpect_cylinder(&x, &g01(), &grids, Execution::default()).unwrap();
        let t1 = conditional_gexpect(&x, 1, &g01(), &grids, Execution::default()).unwrap();
        let t0 = t1.reduce(&g01(), &grids).unwrap();
        assert_abs_diff_eq!(t0.values[0], direct, epsilon = 2e-2);
        let at = t1.value_at(&[grids[0].x(7)]).unwrap();
        assert_abs_diff_eq!(at, t1.values[7], epsilon = 1e-12);
    }

    #[test]
    fn recursion_limits() {
        let x = CylinderFunctional::new(vec![0.2, 0.4, 0.6, 0.8, 1.0], |v| v[0]).unwrap();
        let grids = default_stage_grids(&x, &g01(), 1.0, 11).unwrap();
        assert!(gexpect_cylinder(&x, &g01(), &grids, Execution::Sequential).is_err());
        let (x, grids) = two_stage(|v| v[0]);
        assert!(gexpect_cylinder(&x, &g01(), &grids[..1], Execution::Sequential).is_err());
    }
}
