use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gcore::{CylinderFunctional, GFunction1D};

use super::lattice::{LatticeSpec, Layout};

/// Both sides of `(Ê[sup_t (Ê_t|ξ|)^p])^{1/p} ≤ C·(Ê[|ξ|^{p'}])^{1/p'}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoobReport {
    pub p: f64,
    pub p_prime: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

impl DoobReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "p,p_prime,C,lhs,rhs,margin")?;
        writeln!(
            out,
            "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            self.p, self.p_prime, self.c, self.lhs, self.rhs, self.margin
        )
    }
}

/// `C = (1 + p/(p' − p))^{1/p}`.
pub fn doob_constant(p: f64, p_prime: f64) -> Result<f64> {
    if !(p >= 1.0 && p < p_prime) {
        return Err(Error::domain(format!(
            "Doob exponents need 1 ≤ p < p', got p = {p}, p' = {p_prime}"
        )));
    }
    Ok((1.0 + p / (p_prime - p)).powf(1.0 / p))
}

/// Evaluates both sides of the Doob inequality on the lattice.
///
/// `M = Ê_t[|ξ|]` comes from the backward sup-DP at every node. The left
/// side is a second sup-DP over (node, running max of `M`), where the
/// running max takes values in the finite set of node values of `M`.
pub fn doob_check(
    xi: &CylinderFunctional,
    p: f64,
    p_prime: f64,
    g: &GFunction1D,
    spec: &LatticeSpec,
) -> Result<DoobReport> {
    let c = doob_constant(p, p_prime)?;
    spec.validate(g)?;
    let layout = Layout::new(xi, spec)?;
    let m = layout.sweep(spec, layout.terminal_values(spec, |inc| xi.eval(inc).abs()));

    let mut support: Vec<f64> = m.iter().flatten().copied().collect();
    support.sort_by(f64::total_cmp);
    support.dedup();
    let rank = |v: f64| support.partition_point(|s| *s < v);
    let ranks: Vec<Vec<usize>> = m
        .iter()
        .map(|level| level.iter().map(|v| rank(*v)).collect())
        .collect();
    let nr = support.len();
    let states = layout.size(layout.steps);
    if states.saturating_mul(nr) > super::lattice::STATE_LIMIT * 4 {
        return Err(Error::StateExplosion {
            states: states.saturating_mul(nr),
            limit: super::lattice::STATE_LIMIT * 4,
        });
    }

    // w[idx * nr + r]: value with running-max rank r (only r ≥ rank(M) is reachable).
    let powered: Vec<f64> = support.iter().map(|s| s.powf(p)).collect();
    let mut w: Vec<f64> = (0..states * nr).map(|i| powered[i % nr]).collect();
    for k in (0..layout.steps).rev() {
        let next_ranks = &ranks[k + 1];
        let next = &w;
        w = spec
            .exec
            .map(layout.size(k), |idx| {
                let succ = layout.successors(k, idx);
                (0..nr)
                    .map(|r| {
                        let v = |s: usize| next[s * nr + r.max(next_ranks[s])];
                        spec.sigma_choices
                            .iter()
                            .map(|sigma| {
                                let q = spec.probability(*sigma);
                                q * v(succ[0]) + (1.0 - 2.0 * q) * v(succ[1]) + q * v(succ[2])
                            })
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .collect::<Vec<f64>>()
            })
            .concat();
    }
    let lhs = w[ranks[0][0]].powf(1.0 / p);

    let moment = layout.sweep(
        spec,
        layout.terminal_values(spec, |inc| xi.eval(inc).abs().powf(p_prime)),
    )[0][0];
    let rhs = c * moment.powf(1.0 / p_prime);
    Ok(DoobReport {
        p,
        p_prime,
        c,
        lhs,
        rhs,
        margin: rhs - lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn g01() -> GFunction1D {
        GFunction1D::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn constant_for_two_four() {
        assert_abs_diff_eq!(
            doob_constant(2.0, 4.0).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        assert!(doob_constant(2.0, 2.0).is_err());
        assert!(doob_constant(0.5, 2.0).is_err());
    }

    #[test]
    fn constant_functional() {
        let spec = LatticeSpec::new(8, 1.0, &g01()).unwrap();
        let xi = CylinderFunctional::terminal(1.0, |_| 1.7).unwrap();
        let r = doob_check(&xi, 2.0, 4.0, &g01(), &spec).unwrap();
        assert_abs_diff_eq!(r.lhs, 1.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rhs, 2f64.sqrt() * 1.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.margin, (2f64.sqrt() - 1.0) * 1.7, epsilon = 1e-12);
    }

    #[test]
    fn abs_terminal_has_nonnegative_margin() {
        let spec = LatticeSpec::new(8, 1.0, &g01()).unwrap();
        let xi = CylinderFunctional::terminal(1.0, f64::abs).unwrap();
        let r = doob_check(&xi, 2.0, 4.0, &g01(), &spec).unwrap();
        assert!(r.margin >= 0.0, "{r:?}");
        assert!(r.lhs >= 0.0 && r.c > 1.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
