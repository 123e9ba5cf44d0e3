use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gcore::{CylinderFunctional, GFunction1D};

/// Upper bound on augmented states per lattice level.
pub const STATE_LIMIT: usize = 4_000_000;

/// Recombining trinomial lattice for `B` under a finite volatility menu.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeSpec {
    pub steps: usize,
    pub dt: f64,
    pub dx: f64,
    pub sigma_choices: Vec<f64>,
    #[serde(skip)]
    pub exec: Execution,
}

impl LatticeSpec {
    /// `dx = σ_high·√(3dt)` so that the `σ_high` branch matches the first
    /// four Gaussian moments; the menu is `{σ_low, σ_high}`.
    pub fn new(steps: usize, horizon: f64, g: &GFunction1D) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(Error::domain(
                "lattice needs steps ≥ 1 and a positive horizon",
            ));
        }
        let dt = horizon / steps as f64;
        let scale = if g.sigma_high() > 0.0 {
            g.sigma_high()
        } else {
            1.0
        };
        let mut sigma_choices = vec![g.sigma_low(), g.sigma_high()];
        sigma_choices.dedup();
        let spec = Self {
            steps,
            dt,
            dx: scale * (3.0 * dt).sqrt(),
            sigma_choices,
            exec: Execution::default(),
        };
        spec.validate(g)?;
        Ok(spec)
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// `p(σ) = σ²dt / (2dx²)`.
    pub fn probability(&self, sigma: f64) -> f64 {
        sigma * sigma * self.dt / (2.0 * self.dx * self.dx)
    }

    pub fn validate(&self, g: &GFunction1D) -> Result<()> {
        if self.sigma_choices.is_empty() {
            return Err(Error::domain("empty volatility menu"));
        }
        for &sigma in &self.sigma_choices {
            if !g.contains(sigma) {
                return Err(Error::InadmissibleControl {
                    value: sigma,
                    low: g.sigma_low(),
                    high: g.sigma_high(),
                });
            }
            let p = self.probability(sigma);
            if !(0.0..=0.5 + 1e-12).contains(&p) {
                return Err(Error::LatticeProbability { p, sigma });
            }
        }
        Ok(())
    }

    /// One backward step: the max over the menu of the conditional mean.
    /// Returns the value and the index of the maximizing choice.
    fn best(&self, up: f64, mid: f64, down: f64) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (c, &sigma) in self.sigma_choices.iter().enumerate() {
            let p = self.probability(sigma);
            let v = p * up + (1.0 - 2.0 * p) * mid + p * down;
            if v > best.0 {
                best = (v, c);
            }
        }
        best
    }
}

/// Augmented state layout: positions at the cylinder levels already passed
/// plus the current position, mixed radix with the current position fastest.
pub(crate) struct Layout {
    pub steps: usize,
    /// Lattice levels of the cylinder times (last one is `steps`).
    pub cyl: Vec<usize>,
}

impl Layout {
    pub fn new(x: &CylinderFunctional, spec: &LatticeSpec) -> Result<Self> {
        if (x.horizon() - spec.horizon()).abs() > 1e-9 * x.horizon() {
            return Err(Error::domain(format!(
                "lattice horizon {} differs from the functional's {}",
                spec.horizon(),
                x.horizon()
            )));
        }
        let cyl = x
            .times()
            .iter()
            .map(|t| {
                let s = t / spec.dt;
                if (s - s.round()).abs() > 1e-9 * s.max(1.0) {
                    Err(Error::domain(format!(
                        "cylinder time {t} is not a multiple of the lattice step {}",
                        spec.dt
                    )))
                } else {
                    Ok(s.round() as usize)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = Self {
            steps: spec.steps,
            cyl,
        };
        for k in 0..=spec.steps {
            let states = layout.size(k);
            if states > STATE_LIMIT {
                return Err(Error::StateExplosion {
                    states,
                    limit: STATE_LIMIT,
                });
            }
        }
        Ok(layout)
    }

    fn passed(&self, k: usize) -> &[usize] {
        let m = self.cyl.iter().take_while(|c| **c < k).count();
        &self.cyl[..m]
    }

    fn radices(&self, k: usize) -> Vec<usize> {
        let mut r: Vec<usize> = self.passed(k).iter().map(|c| 2 * c + 1).collect();
        r.push(2 * k + 1);
        r
    }

    pub fn size(&self, k: usize) -> usize {
        self.radices(k)
            .iter()
            .try_fold(1usize, |acc, r| acc.checked_mul(*r))
            .unwrap_or(usize::MAX)
    }

    /// Signed positions (in units of `dx`) of state `idx` on level `k`.
    pub fn decode(&self, k: usize, mut idx: usize) -> Vec<i64> {
        let radices = self.radices(k);
        let mut levels: Vec<usize> = self.passed(k).to_vec();
        levels.push(k);
        let mut pos = vec![0i64; radices.len()];
        for d in (0..radices.len()).rev() {
            pos[d] = (idx % radices[d]) as i64 - levels[d] as i64;
            idx /= radices[d];
        }
        pos
    }

    pub fn encode(&self, k: usize, pos: &[i64]) -> usize {
        let mut levels: Vec<usize> = self.passed(k).to_vec();
        levels.push(k);
        pos.iter().zip(&levels).fold(0usize, |acc, (p, l)| {
            acc * (2 * l + 1) + (p + *l as i64) as usize
        })
    }

    /// Successor indices on level `k + 1` for moves `+1, 0, −1`.
    pub fn successors(&self, k: usize, idx: usize) -> [usize; 3] {
        let pos = self.decode(k, idx);
        let current = *pos.last().expect("non-empty state");
        let mut next: Vec<i64> = pos[..pos.len() - 1].to_vec();
        if self.cyl.contains(&k) {
            next.push(current);
        }
        let at = |delta: i64| {
            let mut p = next.clone();
            p.push(current + delta);
            self.encode(k + 1, &p)
        };
        [at(1), at(0), at(-1)]
    }

    /// Increments `B_{t_i} − B_{t_{i−1}}` of a terminal-level state.
    pub fn increments(&self, idx: usize, dx: f64) -> Vec<f64> {
        let pos = self.decode(self.steps, idx);
        let mut prev = 0i64;
        pos.iter()
            .map(|p| {
                let inc = (p - prev) as f64 * dx;
                prev = *p;
                inc
            })
            .collect()
    }

    /// Backward sup-DP from terminal values; returns every level.
    pub fn sweep(&self, spec: &LatticeSpec, terminal: Vec<f64>) -> Vec<Vec<f64>> {
        let mut levels = vec![Vec::new(); self.steps + 1];
        levels[self.steps] = terminal;
        for k in (0..self.steps).rev() {
            let next = &levels[k + 1];
            let row = spec.exec.map(self.size(k), |idx| {
                let [u, m, d] = self.successors(k, idx);
                spec.best(next[u], next[m], next[d]).0
            });
            levels[k] = row;
        }
        levels
    }

    pub fn terminal_values(
        &self,
        spec: &LatticeSpec,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Vec<f64> {
        spec.exec.map(self.size(self.steps), |idx| {
            f(&self.increments(idx, spec.dx))
        })
    }
}

/// `Ê[X]` by exhaustive dynamic programming on the trinomial lattice:
/// `V = max_σ [p(σ)v_up + (1 − 2p(σ))v_mid + p(σ)v_down]` at every node,
/// with the path arguments of `X` carried in the state.
pub fn lattice_oracle(x: &CylinderFunctional, g: &GFunction1D, spec: &LatticeSpec) -> Result<f64> {
    spec.validate(g)?;
    let layout = Layout::new(x, spec)?;
    let terminal = layout.terminal_values(spec, |inc| x.eval(inc));
    Ok(layout.sweep(spec, terminal)[0][0])
}

/// Values and maximizing volatility on every node of a Markov lattice for
/// `B` (`j ∈ −k..=k` on level `k`).
#[derive(Debug, Clone)]
pub struct LatticeTable {
    pub dx: f64,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
    /// `sigma[k][j + k]`: maximizing choice on level `k < steps`.
    pub sigma: Vec<Vec<f64>>,
}

impl LatticeTable {
    pub fn value_at_root(&self) -> f64 {
        self.values[0][0]
    }
}

/// Markov DP with a running reward: `V_k(j) = max_σ [E_σ V_{k+1} + r(t_k, j·dx, σ)]`
/// and `V_N(j) = φ(j·dx)`.
pub fn lattice_markov(
    spec: &LatticeSpec,
    g: &GFunction1D,
    terminal: impl Fn(f64) -> f64 + Sync,
    running: impl Fn(f64, f64, f64) -> f64 + Sync,
) -> Result<LatticeTable> {
    spec.validate(g)?;
    let n = spec.steps;
    let node = |k: usize, j: usize| (j as f64 - k as f64) * spec.dx;
    let mut values = vec![Vec::new(); n + 1];
    let mut sigma = vec![Vec::new(); n];
    values[n] = spec.exec.map(2 * n + 1, |j| terminal(node(n, j)));
    for k in (0..n).rev() {
        let next = &values[k + 1];
        let t = k as f64 * spec.dt;
        let row = spec.exec.map(2 * k + 1, |j| {
            // Node j on level k sits above node j + 1 on level k + 1.
            let (up, mid, down) = (next[j + 2], next[j + 1], next[j]);
            let x = node(k, j);
            let mut best = (f64::NEG_INFINITY, 0.0);
            for &s in &spec.sigma_choices {
                let p = spec.probability(s);
                let v = p * up + (1.0 - 2.0 * p) * mid + p * down + running(t, x, s);
                if v > best.0 {
                    best = (v, s);
                }
            }
            best
        });
        values[k] = row.iter().map(|r| r.0).collect();
        sigma[k] = row.iter().map(|r| r.1).collect();
    }
    Ok(LatticeTable {
        dx: spec.dx,
        dt: spec.dt,
        values,
        sigma,
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
    fn quadratic_payoffs() {
        let spec = LatticeSpec::new(16, 1.0, &g01()).unwrap();
        let convex = CylinderFunctional::terminal(1.0, |x| x * x).unwrap();
        assert_abs_diff_eq!(
            lattice_oracle(&convex, &g01(), &spec).unwrap(),
            1.0,
            epsilon = 2e-2
        );
        let concave = CylinderFunctional::terminal(1.0, |x| -x * x).unwrap();
        assert_abs_diff_eq!(
            lattice_oracle(&concave, &g01(), &spec).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn layout_round_trip() {
        let x = CylinderFunctional::new(vec![0.25, 0.5, 1.0], |v| v[0]).unwrap();
        let spec = LatticeSpec::new(8, 1.0, &g01()).unwrap();
        let layout = Layout::new(&x, &spec).unwrap();
        for k in 0..=8 {
            for idx in 0..layout.size(k) {
                assert_eq!(layout.encode(k, &layout.decode(k, idx)), idx);
            }
        }
        assert_eq!(layout.size(8), 5 * 9 * 17);
    }

    #[test]
    fn augmented_state_matches_recombined_value() {
        // Depends on B_T only through the increments, so the augmented and
        // the Markov DP must agree exactly.
        let x = CylinderFunctional::new(vec![0.5, 1.0], |v| (v[0] + v[1]).cos()).unwrap();
        let spec = LatticeSpec::new(16, 1.0, &g01()).unwrap();
        let aug = lattice_oracle(&x, &g01(), &spec).unwrap();
        let markov = lattice_markov(&spec, &g01(), f64::cos, |_, _, _| 0.0).unwrap();
        assert_abs_diff_eq!(aug, markov.value_at_root(), epsilon = 1e-12);
    }

    #[test]
    fn errors() {
        let mut spec = LatticeSpec::new(8, 1.0, &g01()).unwrap();
        let x = CylinderFunctional::new(vec![0.3, 1.0], |v| v[0]).unwrap();
        assert!(lattice_oracle(&x, &g01(), &spec).is_err());
        spec.dx = 0.1;
        assert!(matches!(
            spec.validate(&g01()),
            Err(Error::LatticeProbability { .. })
        ));
        let spec = LatticeSpec::new(64, 1.0, &g01()).unwrap();
        let many = CylinderFunctional::new(vec![0.25, 0.5, 0.75, 1.0], |v| v[0]).unwrap();
        assert!(matches!(
            lattice_oracle(&many, &g01(), &spec),
            Err(Error::StateExplosion { .. })
        ));
    }
}
