use crate::error::Result;
use crate::gcore::DriverSpec;
use crate::pde::{DerivativeFields, PdeSolution};

use super::paths::{PathBundle, TimeAxis};

/// PDE fields read along simulated states: linear in `x`, left endpoint
/// in `t`.
pub struct FieldLookup<'a> {
    pub sol: &'a PdeSolution,
    pub fields: &'a DerivativeFields,
}

impl<'a> FieldLookup<'a> {
    pub fn new(sol: &'a PdeSolution, fields: &'a DerivativeFields) -> Self {
        Self { sol, fields }
    }

    pub fn y(&self, t: f64, x: f64) -> Result<f64> {
        self.sol.interp_row(&self.sol.u[self.sol.level_at(t)], x)
    }

    pub fn ux(&self, t: f64, x: f64) -> Result<f64> {
        self.sol
            .interp_row(&self.fields.ux[self.sol.level_at(t)], x)
    }

    pub fn a(&self, t: f64, x: f64) -> Result<f64> {
        self.sol
            .interp_row(&self.sol.a_field[self.sol.level_at(t)], x)
    }
}

/// Γ, X̂ and X̄ along one path, plus the `Y`, `Z` values used to build them.
#[derive(Debug, Clone)]
pub struct PathVariations {
    pub gamma: Vec<f64>,
    pub xhat: Vec<f64>,
    pub xbar: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Integrates the variational processes on one path (`x` has
/// `n_steps + 1` states):
///
/// - `Γ` in log form, `Γ_{k+1} = Γ_k·exp(f_y dt + (g_y − ½g_z²)ΔQV + g_z ΔB)`;
/// - `dX̂ = X̂(b_x dt + h_x dQV + σ_x dB)` by Euler;
/// - `dX̄ = [b_x X̄ + (T−r)/(T−t)·b_t − b/(T−t)]dr + [same with h]dQV
///   + [σ_x X̄ + (T−r)/(T−t)·σ_t − σ/(2(T−t))]dB` by Euler.
pub(crate) fn variations_one(
    d: &DriverSpec,
    axis: &TimeAxis,
    db: &[f64],
    dqv: &[f64],
    x: &[f64],
    look: &FieldLookup,
) -> Result<PathVariations> {
    let n = axis.n_steps;
    let (t0, big_t) = (axis.t0, axis.horizon());
    let tau = big_t - t0;
    let mut out = PathVariations {
        gamma: Vec::with_capacity(n + 1),
        xhat: Vec::with_capacity(n + 1),
        xbar: Vec::with_capacity(n + 1),
        y: Vec::with_capacity(n + 1),
        z: Vec::with_capacity(n + 1),
    };
    let (mut gamma, mut xhat, mut xbar) = (1.0, 1.0, 0.0);
    for k in 0..=n {
        let (t, xk) = (axis.t(k), x[k]);
        let y = look.y(t, xk)?;
        let z = d.sigma.eval(t, xk) * look.ux(t, xk)?;
        out.gamma.push(gamma);
        out.xhat.push(xhat);
        out.xbar.push(xbar);
        out.y.push(y);
        out.z.push(z);
        if k == n {
            break;
        }
        let (dt, dq, dbk) = (axis.dt, dqv[k], db[k]);
        let gz = (d.g.d_z)(t, xk, y, z);
        let log_step =
            (d.f.d_y)(t, xk, y) * dt + ((d.g.d_y)(t, xk, y, z) - 0.5 * gz * gz) * dq + gz * dbk;
        gamma *= log_step.exp();
        let (bx, hx, sx) = ((d.b.d_x)(t, xk), (d.h.d_x)(t, xk), (d.sigma.d_x)(t, xk));
        let w = (big_t - t) / tau;
        let bar_dt = bx * xbar + w * (d.b.d_t)(t, xk) - d.b.eval(t, xk) / tau;
        let bar_qv = hx * xbar + w * (d.h.d_t)(t, xk) - d.h.eval(t, xk) / tau;
        let bar_b = sx * xbar + w * (d.sigma.d_t)(t, xk) - d.sigma.eval(t, xk) / (2.0 * tau);
        xhat += xhat * (bx * dt + hx * dq + sx * dbk);
        xbar += bar_dt * dt + bar_qv * dq + bar_b * dbk;
    }
    Ok(out)
}

/// Variational processes for every path of a bundle.
#[derive(Debug, Clone)]
pub struct VariationalPaths {
    pub gamma: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub xbar: Vec<Vec<f64>>,
}

/// `Γ_t = X̂_t = 1`, `X̄_t = 0` at the bundle's initial time; `Y`, `Z` are
/// read from `sol` at the simulated states `x_paths`.
pub fn variational_paths(
    driver: &DriverSpec,
    bundle: &PathBundle,
    x_paths: &[Vec<f64>],
    sol: &PdeSolution,
    fields: &DerivativeFields,
) -> Result<VariationalPaths> {
    let look = FieldLookup::new(sol, fields);
    let mut out = VariationalPaths {
        gamma: Vec::with_capacity(bundle.n_paths),
        xhat: Vec::with_capacity(bundle.n_paths),
        xbar: Vec::with_capacity(bundle.n_paths),
    };
    for p in 0..bundle.n_paths {
        let v = variations_one(
            driver,
            &bundle.axis,
            bundle.db_path(p),
            bundle.dqv_path(p),
            &x_paths[p],
            &look,
        )?;
        out.gamma.push(v.gamma);
        out.xhat.push(v.xhat);
        out.xbar.push(v.xbar);
    }
    Ok(out)
}
