use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::mean_and_se;
use crate::gbsde::kprocess::k_path_one;
use crate::gcore::{DriverSpec, GFunction1D};
use crate::pde::{derivatives, extremal_control, DerivativeFields, PdeSolution};

use super::paths::{simulate_one, McSpec, TimeAxis, VolatilityControl};
use super::variational::{variations_one, FieldLookup, PathVariations};

/// `E_P[K_T]/max(1, |u(t, x)|)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureResidual {
    pub value: f64,
    pub se: f64,
    /// `|value| ≤ 3·se + 1e-2`.
    pub accepted: bool,
}

impl MeasureResidual {
    fn new(value: f64, se: f64) -> Self {
        Self {
            value,
            se,
            accepted: value.abs() <= 3.0 * se + 1e-2,
        }
    }
}

/// One evaluated control of the family approximating `𝒫_{t,x}`.
#[derive(Debug, Clone, Serialize)]
pub struct ControlEstimate {
    pub control: String,
    pub plus: f64,
    pub minus: f64,
    pub se_plus: f64,
    pub se_minus: f64,
    pub residual: MeasureResidual,
}

/// One-sided derivative estimates at `(t, x)`: `plus` is the max and
/// `minus` the min over the accepted controls (all controls when none is
/// accepted, with `all_rejected` set).
#[derive(Debug, Clone, Serialize)]
pub struct Sensitivity {
    pub t: f64,
    pub x: f64,
    pub plus: f64,
    pub minus: f64,
    pub se_plus: f64,
    pub se_minus: f64,
    pub residual: f64,
    pub all_rejected: bool,
    pub n_paths: usize,
    pub seed: u64,
    pub controls: Vec<ControlEstimate>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Space,
    Time,
}

struct Setup<'a> {
    driver: &'a DriverSpec,
    sol: &'a PdeSolution,
    fields: DerivativeFields,
    axis: TimeAxis,
    x: f64,
    mc: McSpec,
}

/// Per-path `(plus, minus, K_T)`.
fn path_values(
    s: &Setup,
    control: &VolatilityControl,
    dir: Direction,
    path: usize,
) -> Result<(f64, f64, f64)> {
    let d = s.driver;
    let sample = simulate_one(control, &s.axis, s.mc.seed, path, Some(d), s.x)?;
    let look = FieldLookup::new(s.sol, &s.fields);
    let v: PathVariations = variations_one(d, &s.axis, &sample.db, &sample.dqv, &sample.x, &look)?;
    let k = k_path_one(s.sol, &s.sol.g, &s.axis, &sample.dqv, &sample.x, path)?;
    let n = s.axis.n_steps;
    let (big_t, tau) = (s.axis.horizon(), s.axis.horizon() - s.axis.t0);
    let weight = match dir {
        Direction::Space => &v.xhat,
        Direction::Time => &v.xbar,
    };
    let mut running = 0.0;
    for step in 0..n {
        let (t, xk, y, z) = (s.axis.t(step), sample.x[step], v.y[step], v.z[step]);
        let (dt, dq, gamma, w) = (s.axis.dt, sample.dqv[step], v.gamma[step], weight[step]);
        let fx = (d.f.d_x)(t, xk, y);
        let gx = (d.g.d_x)(t, xk, y, z);
        running += match dir {
            Direction::Space => (fx * w * dt + gx * w * dq) * gamma,
            Direction::Time => {
                let r = (big_t - t) / tau;
                let f_term = fx * w + r * (d.f.d_t)(t, xk, y) - d.f.eval(t, xk, y) / tau;
                let g_term =
                    (d.g.d_z)(t, xk, y, z) * z / (2.0 * tau) + gx * w + r * (d.g.d_t)(t, xk, y, z)
                        - d.g.eval(t, xk, y, z) / tau;
                (f_term * dt + g_term * dq) * gamma
            }
        };
    }
    let (x_t, w_t, gamma_t) = (sample.x[n], weight[n], v.gamma[n]);
    let (right, left) = ((d.phi.d_right)(x_t), (d.phi.d_left)(x_t));
    // The plus branch takes the one-sided slope that maximizes φ'·w.
    let (up, down) = if w_t >= 0.0 {
        (right, left)
    } else {
        (left, right)
    };
    Ok((
        up * w_t * gamma_t + running,
        down * w_t * gamma_t + running,
        k.terminal(),
    ))
}

fn evaluate(s: &Setup, control: &VolatilityControl, dir: Direction) -> Result<ControlEstimate> {
    control.validate(&s.sol.g)?;
    let rows =
        s.mc.exec
            .try_map(s.mc.n_paths, |p| path_values(s, control, dir, p))?;
    let column = |i: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| match i {
                0 => r.0,
                1 => r.1,
                _ => r.2,
            })
            .collect()
    };
    let (plus, se_plus) = mean_and_se(&column(0));
    let (minus, se_minus) = mean_and_se(&column(1));
    let (k_mean, k_se) = mean_and_se(&column(2));
    let scale = s.sol.value_at(s.axis.t0, s.x)?.abs().max(1.0);
    Ok(ControlEstimate {
        control: control.label(),
        plus,
        minus,
        se_plus,
        se_minus,
        residual: MeasureResidual::new(k_mean / scale, k_se / scale),
    })
}

fn setup<'a>(
    driver: &'a DriverSpec,
    t: f64,
    x: f64,
    g: &GFunction1D,
    sol: &'a PdeSolution,
    mc: &McSpec,
) -> Result<Setup<'a>> {
    mc.validate()?;
    if sol.g != *g {
        return Err(Error::domain(
            "solution was computed under a different generator",
        ));
    }
    Ok(Setup {
        driver,
        sol,
        fields: derivatives(sol)?,
        axis: TimeAxis::new(t, sol.grid.horizon, mc.n_steps)?,
        x,
        mc: *mc,
    })
}

fn extremal_family(sol: &PdeSolution) -> Vec<VolatilityControl> {
    let field = Arc::new(extremal_control(sol, &sol.g, None));
    let mut family = vec![VolatilityControl::feedback(field.clone(), false)];
    if field.ambiguous_count() > 0 {
        family.push(VolatilityControl::feedback(field, true));
    }
    family
}

fn estimate(s: &Setup, dir: Direction) -> Result<Sensitivity> {
    let controls = extremal_family(s.sol)
        .iter()
        .map(|c| evaluate(s, c, dir))
        .collect::<Result<Vec<_>>>()?;
    let accepted: Vec<&ControlEstimate> = controls.iter().filter(|c| c.residual.accepted).collect();
    let all_rejected = accepted.is_empty();
    let pool: Vec<&ControlEstimate> = if all_rejected {
        controls.iter().collect()
    } else {
        accepted
    };
    let best = pool
        .iter()
        .max_by(|a, b| a.plus.total_cmp(&b.plus))
        .expect("non-empty family");
    let worst = pool
        .iter()
        .min_by(|a, b| a.minus.total_cmp(&b.minus))
        .expect("non-empty family");
    Ok(Sensitivity {
        t: s.axis.t0,
        x: s.x,
        plus: best.plus,
        minus: worst.minus,
        se_plus: best.se_plus,
        se_minus: worst.se_minus,
        residual: controls[0].residual.value,
        all_rejected,
        n_paths: s.mc.n_paths,
        seed: s.mc.seed,
        controls,
    })
}

/// `∂_{x±}u(t, x)` as the sup/inf over the extremal feedback controls of
/// `E_P[φ'(X_T)X̂_TΓ_T + ∫f_x X̂Γ ds + ∫g_x X̂Γ d⟨B⟩]`.
pub fn estimate_dx(
    driver: &DriverSpec,
    t: f64,
    x: f64,
    g: &GFunction1D,
    sol: &PdeSolution,
    mc: &McSpec,
) -> Result<Sensitivity> {
    estimate(&setup(driver, t, x, g, sol, mc)?, Direction::Space)
}

/// `∂_{t±}u(t, x)` from the time-shift variation `X̄`; needs `0 < t < T`.
pub fn estimate_dt(
    driver: &DriverSpec,
    t: f64,
    x: f64,
    g: &GFunction1D,
    sol: &PdeSolution,
    mc: &McSpec,
) -> Result<Sensitivity> {
    if !(t > 0.0 && t < sol.grid.horizon) {
        return Err(Error::domain(format!(
            "time derivative needs 0 < t < T, got t = {t}"
        )));
    }
    estimate(&setup(driver, t, x, g, sol, mc)?, Direction::Time)
}

/// Residual of `control` against the zero-mean condition on `K_T` that
/// defines `𝒫_{t,x}`.
pub fn verify_measure_in_ptx(
    control: &VolatilityControl,
    driver: &DriverSpec,
    t: f64,
    x: f64,
    g: &GFunction1D,
    sol: &PdeSolution,
    mc: &McSpec,
) -> Result<MeasureResidual> {
    let s = setup(driver, t, x, g, sol, mc)?;
    Ok(evaluate(&s, control, Direction::Space)?.residual)
}

/// Columns `t, x, dx_plus, dx_minus, se_plus, se_minus, residual_of_control,
/// n_paths, seed`.
pub fn write_sensitivity_csv<W: Write>(rows: &[Sensitivity], out: &mut W) -> io::Result<()> {
    writeln!(
        out,
        "t,x,dx_plus,dx_minus,se_plus,se_minus,residual_of_control,n_paths,seed"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{},{}",
            r.t, r.x, r.plus, r.minus, r.se_plus, r.se_minus, r.residual, r.n_paths, r.seed
        )?;
    }
    Ok(())
}
