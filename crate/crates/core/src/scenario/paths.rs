use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gcore::{DriverSpec, GFunction1D};
use crate::pde::ControlField;

/// Monte Carlo sizing. Path `i` draws from stream `i` of a ChaCha8
/// generator seeded with `seed`, so adding paths leaves earlier ones intact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McSpec {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl McSpec {
    pub fn new(n_paths: usize, n_steps: usize, seed: u64) -> Self {
        Self {
            n_paths,
            n_steps,
            seed,
            exec: Execution::default(),
        }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::domain(
                "Monte Carlo needs at least one path and one step",
            ));
        }
        Ok(())
    }
}

/// Volatility process `σ_t` selecting one scenario measure.
#[derive(Debug, Clone)]
pub enum VolatilityControl {
    Constant(f64),
    /// `values[i]` applies on `[breaks[i−1], breaks[i])`, with
    /// `values.len() == breaks.len() + 1`.
    Piecewise {
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    /// Extremal feedback read off a PDE solution at the simulated state.
    Feedback {
        field: Arc<ControlField>,
        flip_ambiguous: bool,
    },
}

impl VolatilityControl {
    pub fn feedback(field: Arc<ControlField>, flip_ambiguous: bool) -> Self {
        Self::Feedback {
            field,
            flip_ambiguous,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Constant(s) => format!("constant({s})"),
            Self::Piecewise { .. } => "piecewise".into(),
            Self::Feedback { flip_ambiguous, .. } => {
                if *flip_ambiguous {
                    "feedback-flipped".into()
                } else {
                    "feedback".into()
                }
            }
        }
    }

    pub fn validate(&self, g: &GFunction1D) -> Result<()> {
        let check = |v: f64| {
            if g.contains(v) {
                Ok(())
            } else {
                Err(Error::InadmissibleControl {
                    value: v,
                    low: g.sigma_low(),
                    high: g.sigma_high(),
                })
            }
        };
        match self {
            Self::Constant(s) => check(*s),
            Self::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 || breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::domain(
                        "piecewise control needs increasing breaks and one more value than breaks",
                    ));
                }
                values.iter().try_for_each(|v| check(*v))
            }
            Self::Feedback { field, .. } => {
                if field.g != *g {
                    return Err(Error::domain(
                        "feedback field was built for a different generator",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn sigma(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            Self::Constant(s) => Ok(*s),
            Self::Piecewise { breaks, values } => Ok(values[breaks.partition_point(|b| *b <= t)]),
            Self::Feedback {
                field,
                flip_ambiguous,
            } => field.sigma_at(t, x, *flip_ambiguous),
        }
    }
}

/// One simulated path: increments, quadratic-variation increments and,
/// when a forward driver is given, the state.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub db: Vec<f64>,
    pub dqv: Vec<f64>,
    pub x: Vec<f64>,
}

/// Time axis shared by all paths of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeAxis {
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeAxis {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > t0) || n_steps == 0 {
            return Err(Error::domain(format!(
                "empty simulation window [{t0}, {horizon}]"
            )));
        }
        Ok(Self {
            t0,
            dt: (horizon - t0) / n_steps as f64,
            n_steps,
        })
    }

    pub fn t(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.n_steps)
    }
}

/// `X_{k+1} = X_k + b dt + h ΔQV + σ ΔB`.
pub(crate) fn euler_step(d: &DriverSpec, t: f64, x: f64, dt: f64, dqv: f64, db: f64) -> f64 {
    x + d.b.eval(t, x) * dt + d.h.eval(t, x) * dqv + d.sigma.eval(t, x) * db
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Simulates path `path`. The state follows `forward` from `x0`; without a
/// forward driver it is `x0 + B`, which only matters for feedback controls.
pub(crate) fn simulate_one(
    control: &VolatilityControl,
    axis: &TimeAxis,
    seed: u64,
    path: usize,
    forward: Option<&DriverSpec>,
    x0: f64,
) -> Result<PathSample> {
    let mut rng = path_rng(seed, path);
    let n = axis.n_steps;
    let sqrt_dt = axis.dt.sqrt();
    let mut sample = PathSample {
        db: Vec::with_capacity(n),
        dqv: Vec::with_capacity(n),
        x: Vec::with_capacity(n + 1),
    };
    let mut x = x0;
    sample.x.push(x);
    for k in 0..n {
        let t = axis.t(k);
        let sigma = control.sigma(t, x)?;
        let xi: f64 = rng.sample(StandardNormal);
        let db = sigma * sqrt_dt * xi;
        let dqv = sigma * sigma * axis.dt;
        x = match forward {
            Some(d) => euler_step(d, t, x, axis.dt, dqv, db),
            None => x + db,
        };
        if !x.is_finite() {
            return Err(Error::NonFiniteState { path, step: k + 1 });
        }
        sample.db.push(db);
        sample.dqv.push(dqv);
        sample.x.push(x);
    }
    Ok(sample)
}

/// Increments of `B` and `⟨B⟩` for a batch of paths, path-major.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub n_paths: usize,
    pub axis: TimeAxis,
    pub db: Vec<f64>,
    pub dqv: Vec<f64>,
    pub seed: u64,
    pub control: VolatilityControl,
}

impl PathBundle {
    pub fn n_steps(&self) -> usize {
        self.axis.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.axis.dt
    }

    pub fn db_path(&self, p: usize) -> &[f64] {
        let n = self.axis.n_steps;
        &self.db[p * n..(p + 1) * n]
    }

    pub fn dqv_path(&self, p: usize) -> &[f64] {
        let n = self.axis.n_steps;
        &self.dqv[p * n..(p + 1) * n]
    }

    /// `B` along path `p`, starting at 0.
    pub fn b_path(&self, p: usize) -> Vec<f64> {
        cumulative(self.db_path(p))
    }

    /// `⟨B⟩` along path `p`, starting at 0.
    pub fn qv_path(&self, p: usize) -> Vec<f64> {
        cumulative(self.dqv_path(p))
    }
}

fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

/// Samples `n_paths` scenarios on `[t0, horizon]` with `ΔB_k = σ_k√dt·ξ_k`
/// and `ΔQV_k = σ_k²dt`. Feedback controls read the state `x0 + B`; use
/// [`simulate_state`] to drive them with a forward SDE.
pub fn simulate_paths(
    control: &VolatilityControl,
    g: &GFunction1D,
    mc: &McSpec,
    t0: f64,
    horizon: f64,
) -> Result<PathBundle> {
    simulate_state(control, g, mc, t0, horizon, None, 0.0).map(|(b, _)| b)
}

/// Simulates increments and the forward state jointly; returns the bundle
/// and the state paths (`n_paths` rows of `n_steps + 1` values).
pub fn simulate_state(
    control: &VolatilityControl,
    g: &GFunction1D,
    mc: &McSpec,
    t0: f64,
    horizon: f64,
    forward: Option<&DriverSpec>,
    x0: f64,
) -> Result<(PathBundle, Vec<Vec<f64>>)> {
    mc.validate()?;
    control.validate(g)?;
    let axis = TimeAxis::new(t0, horizon, mc.n_steps)?;
    let samples = mc.exec.try_map(mc.n_paths, |p| {
        simulate_one(control, &axis, mc.seed, p, forward, x0)
    })?;
    let mut db = Vec::with_capacity(mc.n_paths * mc.n_steps);
    let mut dqv = Vec::with_capacity(mc.n_paths * mc.n_steps);
    let mut xs = Vec::with_capacity(mc.n_paths);
    for s in samples {
        db.extend_from_slice(&s.db);
        dqv.extend_from_slice(&s.dqv);
        xs.push(s.x);
    }
    Ok((
        PathBundle {
            n_paths: mc.n_paths,
            axis,
            db,
            dqv,
            seed: mc.seed,
            control: control.clone(),
        },
        xs,
    ))
}

/// Euler–Maruyama `ΔX = b dt + h ΔQV + σ ΔB` on the bundle's increments,
/// started from `x` at the bundle's initial time.
pub fn forward_sde(driver: &DriverSpec, x: f64, bundle: &PathBundle) -> Result<Vec<Vec<f64>>> {
    let axis = bundle.axis;
    (0..bundle.n_paths)
        .map(|p| {
            let (db, dqv) = (bundle.db_path(p), bundle.dqv_path(p));
            let mut path = Vec::with_capacity(axis.n_steps + 1);
            let mut state = x;
            path.push(state);
            for k in 0..axis.n_steps {
                state = euler_step(driver, axis.t(k), state, axis.dt, dqv[k], db[k]);
                if !state.is_finite() {
                    return Err(Error::NonFiniteState {
                        path: p,
                        step: k + 1,
                    });
                }
                path.push(state);
            }
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcore::Coefficient;
    use approx::assert_abs_diff_eq;

    fn g01() -> GFunction1D {
        GFunction1D::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn quadratic_variation_by_construction() {
        let mc = McSpec::new(50, 64, 7);
        let b = simulate_paths(&VolatilityControl::Constant(1.0), &g01(), &mc, 0.0, 1.0).unwrap();
        for p in 0..b.n_paths {
            assert_abs_diff_eq!(*b.qv_path(p).last().unwrap(), 1.0, epsilon = 1e-12);
        }
        let b = simulate_paths(&VolatilityControl::Constant(0.0), &g01(), &mc, 0.0, 1.0).unwrap();
        assert!(b.db.iter().chain(&b.dqv).all(|v| *v == 0.0));
    }

    #[test]
    fn seeds_reproduce_and_streams_are_stable() {
        let c = VolatilityControl::Constant(0.7);
        let mc = McSpec::new(20, 16, 99);
        let a = simulate_paths(&c, &g01(), &mc, 0.0, 1.0).unwrap();
        let b = simulate_paths(&c, &g01(), &mc.with_exec(Execution::Sequential), 0.0, 1.0).unwrap();
        assert_eq!(a.db, b.db);
        let more = simulate_paths(&c, &g01(), &McSpec::new(40, 16, 99), 0.0, 1.0).unwrap();
        assert_eq!(a.db[..], more.db[..a.db.len()]);
        let other = simulate_paths(&c, &g01(), &McSpec::new(20, 16, 100), 0.0, 1.0).unwrap();
        assert_ne!(a.db, other.db);
    }

    #[test]
    fn inadmissible_controls() {
        let mc = McSpec::new(1, 1, 0);
        let c = VolatilityControl::Constant(1.5);
        assert!(matches!(
            simulate_paths(&c, &g01(), &mc, 0.0, 1.0),
            Err(Error::InadmissibleControl { .. })
        ));
        let pw = VolatilityControl::Piecewise {
            breaks: vec![0.5],
            values: vec![1.0, 0.25],
        };
        let b = simulate_paths(&pw, &g01(), &McSpec::new(3, 4, 0), 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            *b.qv_path(0).last().unwrap(),
            0.5 + 0.5 * 0.0625,
            epsilon = 1e-12
        );
    }

    #[test]
    fn forward_sde_is_shifted_brownian_motion() {
        let d = DriverSpec::builder("bm").build().unwrap();
        let mc = McSpec::new(10, 32, 3);
        let b = simulate_paths(&VolatilityControl::Constant(1.0), &g01(), &mc, 0.0, 1.0).unwrap();
        let x = forward_sde(&d, 0.3, &b).unwrap();
        for p in 0..10 {
            for (xk, bk) in x[p].iter().zip(b.b_path(p)) {
                assert_abs_diff_eq!(*xk, 0.3 + bk, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn euler_strong_order_for_geometric_noise() {
        let d = DriverSpec::builder("geometric")
            .sigma(Coefficient::linear(1.0))
            .build()
            .unwrap();
        let fine = 1024;
        let mc = McSpec::new(2000, fine, 11);
        let b = simulate_paths(&VolatilityControl::Constant(1.0), &g01(), &mc, 0.0, 1.0).unwrap();
        let mut errs = Vec::new();
        let mut hs = Vec::new();
        for coarse in [16usize, 32, 64, 128] {
            let r = fine / coarse;
            let coarse_db: Vec<f64> = b.db.chunks(r).map(|c| c.iter().sum()).collect();
            let coarse_b = PathBundle {
                axis: TimeAxis::new(0.0, 1.0, coarse).unwrap(),
                db: coarse_db,
                dqv: vec![1.0 / coarse as f64; b.n_paths * coarse],
                ..b.clone()
            };
            let x = forward_sde(&d, 1.0, &coarse_b).unwrap();
            let mut total = 0.0;
            for p in 0..b.n_paths {
                let bt: f64 = b.db_path(p).iter().sum();
                total += (x[p][coarse] - (bt - 0.5).exp()).abs();
            }
            errs.push((total / b.n_paths as f64).ln());
            hs.push((1.0 / coarse as f64).ln());
        }
        let n = hs.len() as f64;
        let (mh, me) = (hs.iter().sum::<f64>() / n, errs.iter().sum::<f64>() / n);
        let slope = hs
            .iter()
            .zip(&errs)
            .map(|(h, e)| (h - mh) * (e - me))
            .sum::<f64>()
            / hs.iter().map(|h| (h - mh).powi(2)).sum::<f64>();
        assert!((0.4..=0.6).contains(&slope), "strong order {slope}");
    }
}
