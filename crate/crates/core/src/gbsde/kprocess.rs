use crate::error::{Error, Result};
use crate::gcore::GFunction1D;
use crate::pde::PdeSolution;
use crate::scenario::{PathBundle, TimeAxis};

/// Cumulative `K` along one path, `k[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KPath {
    pub k: Vec<f64>,
}

impl KPath {
    pub fn terminal(&self) -> f64 {
        *self.k.last().expect("K path has at least K_0")
    }
}

/// `ΔK_k = ½a_kΔQV_k − G(a_k)dt` with `a_k` read at the path state. Each
/// increment must be ≤ `1e-10·(1 + max|K|)`.
pub(crate) fn k_path_one(
    sol: &PdeSolution,
    g: &GFunction1D,
    axis: &TimeAxis,
    dqv: &[f64],
    x: &[f64],
    path: usize,
) -> Result<KPath> {
    let mut k = Vec::with_capacity(axis.n_steps + 1);
    let mut acc = 0.0;
    let mut scale: f64 = 0.0;
    k.push(acc);
    for step in 0..axis.n_steps {
        let t = axis.t(step);
        let a = sol.interp_row(&sol.a_field[sol.level_at(t)], x[step])?;
        let inc = 0.5 * a * dqv[step] - g.eval(a) * axis.dt;
        if inc > 1e-10 * (1.0 + scale) {
            return Err(Error::KIncreasing {
                path,
                step: step + 1,
                increase: inc,
            });
        }
        acc += inc;
        scale = scale.max(acc.abs());
        k.push(acc);
    }
    Ok(KPath { k })
}

/// `K` on every path of `bundle` from the solution's `a` field and the
/// state paths `x_paths`.
pub fn reconstruct_k_from_solution(
    sol: &PdeSolution,
    bundle: &PathBundle,
    x_paths: &[Vec<f64>],
) -> Result<Vec<KPath>> {
    (0..bundle.n_paths)
        .map(|p| {
            k_path_one(
                sol,
                &sol.g,
                &bundle.axis,
                bundle.dqv_path(p),
                &x_paths[p],
                p,
            )
        })
        .collect()
}
