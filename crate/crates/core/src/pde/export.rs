use std::io::{self, Write};

use super::fields::{derivatives, extremal_control};
use super::scheme::PdeSolution;

/// One row per node `(t, x, u, ux, uxx, a, sigma_star)`, every
/// `level_stride`-th time level (the terminal level is always written).
pub fn write_solution_csv<W: Write>(
    sol: &PdeSolution,
    out: &mut W,
    level_stride: usize,
) -> io::Result<()> {
    let d = derivatives(sol).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    let control = extremal_control(sol, &sol.g, None);
    writeln!(out, "t,x,u,ux,uxx,a,sigma_star")?;
    let nt = sol.grid.nt;
    let stride = level_stride.max(1);
    for k in (0..=nt).filter(|k| k % stride == 0 || *k == nt) {
        let t = sol.grid.t(k);
        for i in 0..sol.grid.nx {
            writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
                t,
                sol.grid.x(i),
                sol.u[k][i],
                d.ux[k][i],
                d.uxx[k][i],
                sol.a_field[k][i],
                control.sigma_star[k][i]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::{DriverSpec, GFunction1D, Grid1D, Params, Payoff};
    use crate::pde::{solve_terminal_pde, PdeForm, PdeProblem};

    #[test]
    fn csv_layout() {
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        let driver =
            DriverSpec::g_heat(Payoff::preset("quadratic", &Params::new()).unwrap()).unwrap();
        let grid = Grid1D::new(-2.0, 2.0, 11, 0.1, 1).unwrap();
        let p = PdeProblem::with_cfl(grid, driver, g, PdeForm::GHeat, 0.9).unwrap();
        let sol = solve_terminal_pde(&p).unwrap();
        let mut buf = Vec::new();
        write_solution_csv(&sol, &mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x,u,ux,uxx,a,sigma_star");
        assert_eq!(lines.count(), 11 * (sol.grid.nt + 1));
        let first = text.lines().nth(1).unwrap();
        // 16 significant digits per value.
        assert!(first.split(',').all(|v| v.contains('e')));
    }
}
