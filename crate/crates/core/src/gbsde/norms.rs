use serde::Serialize;

use crate::exec::pairwise_sum;
use crate::scenario::PathBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathNorms {
    /// `max_P (E_P[(∫|η|²d⟨B⟩)^{p/2}])^{1/p}`.
    pub h_norm: f64,
    /// `max_P (E_P[(∫|η|²dt)^{p/2}])^{1/p}`.
    pub m_norm: f64,
}

/// Empirical sup-over-controls norms of `η(bundle, path, step)`; one bundle
/// per control.
pub fn path_norms(
    eta: impl Fn(&PathBundle, usize, usize) -> f64,
    p: f64,
    bundles: &[PathBundle],
) -> PathNorms {
    let mut out = PathNorms {
        h_norm: 0.0,
        m_norm: 0.0,
    };
    for b in bundles {
        let (mut h, mut m) = (Vec::with_capacity(b.n_paths), Vec::with_capacity(b.n_paths));
        for path in 0..b.n_paths {
            let dqv = b.dqv_path(path);
            let sq: Vec<f64> = (0..b.n_steps()).map(|k| eta(b, path, k).powi(2)).collect();
            let hq: Vec<f64> = sq.iter().zip(dqv).map(|(s, q)| s * q).collect();
            h.push(pairwise_sum(&hq).powf(p / 2.0));
            m.push((pairwise_sum(&sq) * b.dt()).powf(p / 2.0));
        }
        let mean = |v: &[f64]| (pairwise_sum(v) / v.len() as f64).powf(1.0 / p);
        out.h_norm = out.h_norm.max(mean(&h));
        out.m_norm = out.m_norm.max(mean(&m));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::GFunction1D;
    use crate::scenario::{simulate_paths, McSpec, VolatilityControl};
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_integrand() {
        let g = GFunction1D::new(0.0, 1.5).unwrap();
        let mc = McSpec::new(10, 40, 1);
        let high = simulate_paths(&VolatilityControl::Constant(1.5), &g, &mc, 0.0, 2.0).unwrap();
        let zero = simulate_paths(&VolatilityControl::Constant(0.0), &g, &mc, 0.0, 2.0).unwrap();
        let n = path_norms(|_, _, _| 1.0, 2.0, std::slice::from_ref(&high));
        assert_abs_diff_eq!(n.h_norm, 1.5 * 2f64.sqrt(), epsilon = 1e-12);
        let n = path_norms(|_, _, _| 1.0, 2.0, std::slice::from_ref(&zero));
        assert_eq!(n.h_norm, 0.0);
        let n = path_norms(|_, _, _| 1.0, 2.0, &[zero, high]);
        assert!(n.h_norm <= 1.5 * n.m_norm + 1e-12);
    }
}
