//! Coefficient bundles `(b, h, σ, f, g, φ)` for the forward-backward system
//!
//! ```text
//! dX = b(s,X)ds + h(s,X)d⟨B⟩ + σ(s,X)dB
//! Y_s = φ(X_T) + ∫ f(r,X,Y)dr + ∫ g(r,X,Y,Z)d⟨B⟩ − ∫ Z dB − (K_T − K_s)
//! ```
//!
//! together with their analytic derivatives and declared growth constants.
//! The pure G-BSDE driver `h(y, z)` of the regularized problem is carried in
//! the `g` slot with `σ ≡ 1`, so a single bundle type serves every PDE form.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TimeSpaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type FFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type GFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

pub type Params = BTreeMap<String, f64>;

/// Names accepted by [`preset_driver`].
pub const DRIVER_PRESETS: &[&str] = &[
    "zero",
    "quadratic",
    "abs",
    "smooth-bump",
    "linear-h",
    "sine-gz",
    "kinked",
    "counterexample-weight",
];

/// Names accepted by [`Payoff::preset`].
pub const PAYOFF_PRESETS: &[&str] = &[
    "zero",
    "constant",
    "linear",
    "quadratic",
    "abs",
    "smooth-bump",
    "cos",
];

fn ts(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> TimeSpaceFn {
    Arc::new(f)
}

/// A forward coefficient `c(t, x)` (one of b, h, σ) with its derivatives.
#[derive(Clone)]
pub struct Coefficient {
    pub value: TimeSpaceFn,
    pub d_x: TimeSpaceFn,
    pub d_t: TimeSpaceFn,
    pub d_xx: Option<TimeSpaceFn>,
}

impl Coefficient {
    pub fn new(
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d_x: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        d_t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: ts(value),
            d_x: ts(d_x),
            d_t: ts(d_t),
            d_xx: None,
        }
    }

    pub fn with_d_xx(mut self, d_xx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.d_xx = Some(ts(d_xx));
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c, |_, _| 0.0, |_, _| 0.0).with_d_xx(|_, _| 0.0)
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `c(t, x) = β·x`.
    pub fn linear(beta: f64) -> Self {
        Self::new(move |_, x| beta * x, move |_, _| beta, |_, _| 0.0).with_d_xx(|_, _| 0.0)
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        (self.value)(t, x)
    }
}

/// `f(t, x, y)`. No `z` argument: a `Z ds` term cannot be written as a
/// `d⟨B⟩` term once the volatility may vanish.
#[derive(Clone)]
pub struct FDriver {
    pub value: FFn,
    pub d_x: FFn,
    pub d_y: FFn,
    pub d_t: FFn,
    pub d_xx: Option<FFn>,
    pub d_xy: Option<FFn>,
    pub d_yy: Option<FFn>,
}

impl FDriver {
    pub fn new(
        value: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_x: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_y: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_t: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            d_x: Arc::new(d_x),
            d_y: Arc::new(d_y),
            d_t: Arc::new(d_t),
            d_xx: None,
            d_xy: None,
            d_yy: None,
        }
    }

    pub fn with_second(
        mut self,
        d_xx: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_xy: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_yy: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.d_xx = Some(Arc::new(d_xx));
        self.d_xy = Some(Arc::new(d_xy));
        self.d_yy = Some(Arc::new(d_yy));
        self
    }

    pub fn zero() -> Self {
        Self::linear_y(0.0)
    }

    /// `f = −r·y` (discounting).
    pub fn linear_y(r: f64) -> Self {
        Self::new(
            move |_, _, y| -r * y,
            |_, _, _| 0.0,
            move |_, _, _| -r,
            |_, _, _| 0.0,
        )
        .with_second(|_, _, _| 0.0, |_, _, _| 0.0, |_, _, _| 0.0)
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        (self.value)(t, x, y)
    }
}

/// `g(t, x, y, z)` multiplying `d⟨B⟩`.
#[derive(Clone)]
pub struct GDriver {
    pub value: GFn,
    pub d_x: GFn,
    pub d_y: GFn,
    pub d_z: GFn,
    pub d_t: GFn,
    /// `[g_xx, g_xy, g_xz, g_yy, g_yz, g_zz]`
    pub second: Option<[GFn; 6]>,
}

impl GDriver {
    pub fn new(
        value: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_x: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_y: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_z: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        d_t: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            d_x: Arc::new(d_x),
            d_y: Arc::new(d_y),
            d_z: Arc::new(d_z),
            d_t: Arc::new(d_t),
            second: None,
        }
    }

    pub fn with_second(mut self, second: [GFn; 6]) -> Self {
        self.second = Some(second);
        self
    }

    pub fn constant(c: f64) -> Self {
        let zero = || -> GFn { Arc::new(|_, _, _, _| 0.0) };
        Self::new(
            move |_, _, _, _| c,
            |_, _, _, _| 0.0,
            |_, _, _, _| 0.0,
            |_, _, _, _| 0.0,
            |_, _, _, _| 0.0,
        )
        .with_second([zero(), zero(), zero(), zero(), zero(), zero()])
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `g = c·sin(k·z)`.
    pub fn sine_z(c: f64, k: f64) -> Self {
        let zero = || -> GFn { Arc::new(|_, _, _, _| 0.0) };
        Self::new(
            move |_, _, _, z| c * (k * z).sin(),
            |_, _, _, _| 0.0,
            |_, _, _, _| 0.0,
            move |_, _, _, z| c * k * (k * z).cos(),
            |_, _, _, _| 0.0,
        )
        .with_second([
            zero(),
            zero(),
            zero(),
            zero(),
            zero(),
            Arc::new(move |_, _, _, z| -c * k * k * (k * z).sin()),
        ])
    }

    /// `g = c·z`.
    pub fn linear_z(c: f64) -> Self {
        let zero = || -> GFn { Arc::new(|_, _, _, _| 0.0) };
        Self::new(
            move |_, _, _, z| c * z,
            |_, _, _, _| 0.0,
            |_, _, _, _| 0.0,
            move |_, _, _, _| c,
            |_, _, _, _| 0.0,
        )
        .with_second([zero(), zero(), zero(), zero(), zero(), zero()])
    }

    pub fn eval(&self, t: f64, x: f64, y: f64, z: f64) -> f64 {
        (self.value)(t, x, y, z)
    }
}

/// Terminal payoff with one-sided derivatives, so kinks such as `|x|` are
/// represented exactly.
#[derive(Clone)]
pub struct Payoff {
    pub name: String,
    pub value: ScalarFn,
    /// Right derivative `φ'(x+)`.
    pub d_right: ScalarFn,
    /// Left derivative `φ'(x−)`.
    pub d_left: ScalarFn,
    pub d_xx: Option<ScalarFn>,
    /// Points where `φ'` jumps.
    pub kinks: Vec<f64>,
    /// Declared `L₁, m` with `|φ(x) − φ(x')| ≤ L₁(1 + |x|^m + |x'|^m)|x − x'|`.
    pub l1: f64,
    pub m: u32,
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("name", &self.name)
            .field("kinks", &self.kinks)
            .field("l1", &self.l1)
            .field("m", &self.m)
            .finish()
    }
}

impl Payoff {
    /// Smooth payoff: both one-sided derivatives are `d_x`.
    pub fn smooth(
        name: &str,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d_x: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d_xx: impl Fn(f64) -> f64 + Send + Sync + 'static,
        l1: f64,
        m: u32,
    ) -> Self {
        let d: ScalarFn = Arc::new(d_x);
        Self {
            name: name.to_string(),
            value: Arc::new(value),
            d_right: d.clone(),
            d_left: d,
            d_xx: Some(Arc::new(d_xx)),
            kinks: Vec::new(),
            l1,
            m,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    /// Catalog: `zero`, `constant{c}`, `linear{slope}`, `quadratic{a}`,
    /// `abs{amp, smooth, strike}`, `smooth-bump{amp, width}`, `cos{freq}`.
    pub fn preset(name: &str, params: &Params) -> Result<Self> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let payoff = match name {
            "zero" => Self::smooth("zero", |_| 0.0, |_| 0.0, |_| 0.0, 1.0, 1),
            "constant" => {
                let c = get("c", 1.0);
                Self::smooth("constant", move |_| c, |_| 0.0, |_| 0.0, 1.0, 1)
            }
            "linear" => {
                let s = get("slope", 1.0);
                Self::smooth(
                    "linear",
                    move |x| s * x,
                    move |_| s,
                    |_| 0.0,
                    s.abs().max(1.0),
                    1,
                )
            }
            "quadratic" => {
                let a = get("a", 1.0);
                Self::smooth(
                    "quadratic",
                    move |x| a * x * x,
                    move |x| 2.0 * a * x,
                    move |_| 2.0 * a,
                    a.abs().max(1.0),
                    1,
                )
            }
            "abs" => {
                let amp = get("amp", 1.0);
                let delta = get("smooth", 0.0);
                let k = get("strike", 0.0);
                if delta < 0.0 {
                    return Err(Error::domain("abs payoff: smooth must be >= 0"));
                }
                if delta > 0.0 {
                    Self::smooth(
                        "abs",
                        move |x| amp * ((x - k) * (x - k) + delta * delta).sqrt(),
                        move |x| amp * (x - k) / ((x - k) * (x - k) + delta * delta).sqrt(),
                        move |x| {
                            let r2 = (x - k) * (x - k) + delta * delta;
                            amp * delta * delta / (r2 * r2.sqrt())
                        },
                        amp.abs().max(1.0),
                        1,
                    )
                } else {
                    Self {
                        name: "abs".into(),
                        value: Arc::new(move |x| amp * (x - k).abs()),
                        d_right: Arc::new(move |x| if x >= k { amp } else { -amp }),
                        d_left: Arc::new(move |x| if x > k { amp } else { -amp }),
                        d_xx: None,
                        kinks: vec![k],
                        l1: amp.abs().max(1.0),
                        m: 1,
                    }
                }
            }
            "smooth-bump" => {
                let amp = get("amp", 1.0);
                let w = get("width", 1.0);
                if w <= 0.0 {
                    return Err(Error::domain("smooth-bump payoff: width must be > 0"));
                }
                let w2 = w * w;
                Self::smooth(
                    "smooth-bump",
                    move |x| amp * (-x * x / (2.0 * w2)).exp(),
                    move |x| -amp * x / w2 * (-x * x / (2.0 * w2)).exp(),
                    move |x| amp * (x * x / w2 - 1.0) / w2 * (-x * x / (2.0 * w2)).exp(),
                    (amp.abs() / w).max(1.0),
                    1,
                )
            }
            "cos" => {
                let k = get("freq", 1.0);
                Self::smooth(
                    "cos",
                    move |x| (k * x).cos(),
                    move |x| -k * (k * x).sin(),
                    move |x| -k * k * (k * x).cos(),
                    k.abs().max(1.0),
                    1,
                )
            }
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        Ok(payoff)
    }
}

/// Declared growth constants of the coefficient assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthConstants {
    pub l1: f64,
    pub m: u32,
    pub l2: Option<f64>,
    pub m1: Option<u32>,
    pub l3: Option<f64>,
}

impl Default for GrowthConstants {
    fn default() -> Self {
        Self {
            l1: 1.0,
            m: 1,
            l2: None,
            m1: None,
            l3: None,
        }
    }
}

/// Which coefficients vanish identically (detected by sampling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Structure {
    pub b_zero: bool,
    pub h_zero: bool,
    pub f_zero: bool,
    pub g_zero: bool,
    pub sigma_unit: bool,
    pub sigma_constant: bool,
}

#[derive(Clone)]
pub struct DriverSpec {
    pub name: String,
    pub b: Coefficient,
    pub h: Coefficient,
    pub sigma: Coefficient,
    pub f: FDriver,
    pub g: GDriver,
    pub phi: Payoff,
    pub constants: GrowthConstants,
    /// Lipschitz constant of `f` and `g` in `y`.
    pub lip_y: f64,
    /// Lipschitz constant of `g` in `z`.
    pub lip_z: f64,
    structure: Structure,
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("phi", &self.phi)
            .field("constants", &self.constants)
            .field("structure", &self.structure)
            .finish_non_exhaustive()
    }
}

impl DriverSpec {
    pub fn builder(name: &str) -> DriverBuilder {
        DriverBuilder {
            spec: DriverSpec {
                name: name.to_string(),
                b: Coefficient::zero(),
                h: Coefficient::zero(),
                sigma: Coefficient::constant(1.0),
                f: FDriver::zero(),
                g: GDriver::zero(),
                phi: Payoff::preset("zero", &Params::new()).expect("zero payoff"),
                constants: GrowthConstants::default(),
                lip_y: 0.0,
                lip_z: 0.0,
                structure: Structure {
                    b_zero: true,
                    h_zero: true,
                    f_zero: true,
                    g_zero: true,
                    sigma_unit: true,
                    sigma_constant: true,
                },
            },
        }
    }

    /// `b = h = f = g = 0`, `σ ≡ 1`: the G-heat equation for `φ`.
    pub fn g_heat(phi: Payoff) -> Result<Self> {
        Self::builder("g-heat").payoff(phi).build()
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    /// Same coefficients with another terminal payoff; the self-check is
    /// rerun because the payoff is part of it.
    pub fn with_payoff(&self, phi: Payoff) -> Result<Self> {
        let mut spec = self.clone();
        spec.constants.l1 = spec.constants.l1.max(phi.l1);
        spec.constants.m = spec.constants.m.max(phi.m);
        spec.phi = phi;
        spec.self_check()?;
        Ok(spec)
    }

    pub fn is_pure_g_heat(&self) -> bool {
        let s = self.structure;
        s.b_zero && s.h_zero && s.f_zero && s.g_zero && s.sigma_unit
    }

    /// True when every (A5) second derivative is supplied.
    pub fn has_second_derivatives(&self) -> bool {
        self.b.d_xx.is_some()
            && self.h.d_xx.is_some()
            && self.sigma.d_xx.is_some()
            && self.f.d_xx.is_some()
            && self.f.d_xy.is_some()
            && self.f.d_yy.is_some()
            && self.g.second.is_some()
    }

    fn sample_box(n: usize) -> Vec<[f64; 4]> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xd71e_5eed);
        (0..n)
            .map(|_| {
                [
                    rng.random_range(0.0..1.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ]
            })
            .collect()
    }

    fn detect_structure(&mut self) {
        let pts = Self::sample_box(64);
        let all = |f: &dyn Fn(&[f64; 4]) -> bool| pts.iter().all(f);
        let s0 = self.sigma.eval(pts[0][0], pts[0][1]);
        self.structure = Structure {
            b_zero: all(&|p| self.b.eval(p[0], p[1]) == 0.0),
            h_zero: all(&|p| self.h.eval(p[0], p[1]) == 0.0),
            f_zero: all(&|p| self.f.eval(p[0], p[1], p[2]) == 0.0),
            g_zero: all(&|p| self.g.eval(p[0], p[1], p[2], p[3]) == 0.0),
            sigma_unit: all(&|p| self.sigma.eval(p[0], p[1]) == 1.0),
            sigma_constant: all(&|p| self.sigma.eval(p[0], p[1]) == s0),
        };
    }

    /// Compares every supplied derivative with a central finite difference
    /// on a sampled box (relative tolerance 1e-4) and smoke-tests the
    /// declared Lipschitz/growth constants.
    pub fn self_check(&self) -> Result<()> {
        const REL_TOL: f64 = 1e-4;
        const H: f64 = 1e-5;
        let pts = Self::sample_box(48);
        let check = |field: &str, at: &[f64; 4], analytic: f64, numeric: f64| -> Result<()> {
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            if (analytic - numeric).abs() > REL_TOL * scale || !analytic.is_finite() {
                return Err(Error::DerivativeMismatch {
                    field: field.to_string(),
                    at: format!(
                        "(t={:.4}, x={:.4}, y={:.4}, z={:.4})",
                        at[0], at[1], at[2], at[3]
                    ),
                    analytic,
                    numeric,
                });
            }
            Ok(())
        };
        let d1 = |f: &dyn Fn(f64) -> f64, v: f64| (f(v + H) - f(v - H)) / (2.0 * H);
        for p in &pts {
            let [t, x, y, z] = *p;
            for (name, c) in [("b", &self.b), ("h", &self.h), ("sigma", &self.sigma)] {
                check(
                    &format!("{name}_x"),
                    p,
                    (c.d_x)(t, x),
                    d1(&|v| (c.value)(t, v), x),
                )?;
                check(
                    &format!("{name}_t"),
                    p,
                    (c.d_t)(t, x),
                    d1(&|s| (c.value)(s, x), t),
                )?;
                if let Some(dxx) = &c.d_xx {
                    check(
                        &format!("{name}_xx"),
                        p,
                        dxx(t, x),
                        d1(&|v| (c.d_x)(t, v), x),
                    )?;
                }
            }
            let f = &self.f;
            check("f_x", p, (f.d_x)(t, x, y), d1(&|v| (f.value)(t, v, y), x))?;
            check("f_y", p, (f.d_y)(t, x, y), d1(&|v| (f.value)(t, x, v), y))?;
            check("f_t", p, (f.d_t)(t, x, y), d1(&|v| (f.value)(v, x, y), t))?;
            if let (Some(xx), Some(xy), Some(yy)) = (&f.d_xx, &f.d_xy, &f.d_yy) {
                check("f_xx", p, xx(t, x, y), d1(&|v| (f.d_x)(t, v, y), x))?;
                check("f_xy", p, xy(t, x, y), d1(&|v| (f.d_x)(t, x, v), y))?;
                check("f_yy", p, yy(t, x, y), d1(&|v| (f.d_y)(t, x, v), y))?;
            }
            let g = &self.g;
            check(
                "g_x",
                p,
                (g.d_x)(t, x, y, z),
                d1(&|v| (g.value)(t, v, y, z), x),
            )?;
            check(
                "g_y",
                p,
                (g.d_y)(t, x, y, z),
                d1(&|v| (g.value)(t, x, v, z), y),
            )?;
            check(
                "g_z",
                p,
                (g.d_z)(t, x, y, z),
                d1(&|v| (g.value)(t, x, y, v), z),
            )?;
            check(
                "g_t",
                p,
                (g.d_t)(t, x, y, z),
                d1(&|v| (g.value)(v, x, y, z), t),
            )?;
            if let Some([xx, xy, xz, yy, yz, zz]) = &g.second {
                check("g_xx", p, xx(t, x, y, z), d1(&|v| (g.d_x)(t, v, y, z), x))?;
                check("g_xy", p, xy(t, x, y, z), d1(&|v| (g.d_x)(t, x, v, z), y))?;
                check("g_xz", p, xz(t, x, y, z), d1(&|v| (g.d_x)(t, x, y, v), z))?;
                check("g_yy", p, yy(t, x, y, z), d1(&|v| (g.d_y)(t, x, v, z), y))?;
                check("g_yz", p, yz(t, x, y, z), d1(&|v| (g.d_y)(t, x, y, v), z))?;
                check("g_zz", p, zz(t, x, y, z), d1(&|v| (g.d_z)(t, x, y, v), z))?;
            }
            let phi = &self.phi;
            let near_kink = phi.kinks.iter().any(|k| (x - k).abs() < 1e-3);
            if !near_kink {
                let num = d1(&|v| phi.eval(v), x);
                check("phi_x+", p, (phi.d_right)(x), num)?;
                check("phi_x-", p, (phi.d_left)(x), num)?;
                if let Some(dxx) = &phi.d_xx {
                    check("phi_xx", p, dxx(x), d1(&|v| (phi.d_right)(v), x))?;
                }
            }
        }
        self.check_growth(&pts)
    }

    fn check_growth(&self, pts: &[[f64; 4]]) -> Result<()> {
        let l1 = self.constants.l1;
        let m = self.constants.m as i32;
        let slack = 1e-9;
        for w in pts.windows(2) {
            let (t, x, xp) = (w[0][0], w[0][1], w[1][1]);
            let dx = (x - xp).abs();
            let weight = 1.0 + x.abs().powi(m) + xp.abs().powi(m);
            let lhs = (self.phi.eval(x) - self.phi.eval(xp)).abs();
            if lhs > l1 * weight * dx + slack {
                return Err(Error::GrowthViolation(format!(
                    "|phi({x}) - phi({xp})| = {lhs} exceeds L1(1+|x|^m+|x'|^m)|x-x'| with L1 = {l1}, m = {m}"
                )));
            }
            let coef = (self.b.eval(t, x) - self.b.eval(t, xp)).abs()
                + (self.h.eval(t, x) - self.h.eval(t, xp)).abs()
                + (self.sigma.eval(t, x) - self.sigma.eval(t, xp)).abs();
            if coef > l1 * dx + slack {
                return Err(Error::GrowthViolation(format!(
                    "b, h, sigma not L1-Lipschitz between x = {x} and x' = {xp} (L1 = {l1})"
                )));
            }
        }
        Ok(())
    }
}

pub struct DriverBuilder {
    spec: DriverSpec,
}

impl DriverBuilder {
    pub fn b(mut self, b: Coefficient) -> Self {
        self.spec.b = b;
        self
    }

    pub fn h(mut self, h: Coefficient) -> Self {
        self.spec.h = h;
        self
    }

    pub fn sigma(mut self, sigma: Coefficient) -> Self {
        self.spec.sigma = sigma;
        self
    }

    pub fn f(mut self, f: FDriver) -> Self {
        self.spec.f = f;
        self
    }

    pub fn g(mut self, g: GDriver) -> Self {
        self.spec.g = g;
        self
    }

    pub fn payoff(mut self, phi: Payoff) -> Self {
        self.spec.phi = phi;
        self
    }

    pub fn constants(mut self, constants: GrowthConstants) -> Self {
        self.spec.constants = constants;
        self
    }

    pub fn lipschitz(mut self, lip_y: f64, lip_z: f64) -> Self {
        self.spec.lip_y = lip_y;
        self.spec.lip_z = lip_z;
        self
    }

    /// Runs the derivative self-check and structure detection.
    pub fn build(mut self) -> Result<DriverSpec> {
        let c = &mut self.spec.constants;
        c.l1 = c.l1.max(self.spec.phi.l1);
        c.m = c.m.max(self.spec.phi.m);
        self.spec.detect_structure();
        self.spec.self_check()?;
        Ok(self.spec)
    }
}

/// Builds a catalog driver. Unknown parameter keys are rejected so typos in
/// configuration files surface early.
pub fn preset_driver(name: &str, params: &Params) -> Result<DriverSpec> {
    let allowed: &[&str] = match name {
        "zero" => &["sigma"],
        "quadratic" => &["a", "sigma"],
        "abs" => &["amp", "smooth", "strike", "sigma"],
        "smooth-bump" => &["amp", "width", "sigma"],
        "linear-h" => &["c", "a"],
        "sine-gz" => &["c", "k", "amp", "width"],
        "kinked" => &["strike", "kappa", "sigma", "r"],
        "counterexample-weight" => &[],
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::domain(format!(
            "preset `{name}` does not take parameter `{bad}` (accepted: {allowed:?})"
        )));
    }
    let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
    let sigma = get("sigma", 1.0);
    let payoff = |pname: &str| Payoff::preset(pname, params);
    let second = |l3: f64| GrowthConstants {
        l3: Some(l3),
        l2: Some(0.0),
        m1: Some(1),
        ..GrowthConstants::default()
    };
    let b = DriverSpec::builder(name).sigma(Coefficient::constant(sigma));
    let spec = match name {
        "zero" => b.payoff(payoff("zero")?).constants(second(0.0)),
        "quadratic" => b.payoff(payoff("quadratic")?).constants(second(0.0)),
        "abs" => b.payoff(payoff("abs")?).constants(second(0.0)),
        "smooth-bump" => b.payoff(payoff("smooth-bump")?).constants(second(0.0)),
        "linear-h" => {
            let c = *params.get("c").ok_or_else(|| Error::MissingParameter {
                preset: name.into(),
                param: "c".into(),
            })?;
            b.g(GDriver::constant(c))
                .payoff(payoff("quadratic")?)
                .constants(second(0.0))
        }
        "sine-gz" => {
            let c = get("c", 0.5);
            let k = get("k", 1.0);
            b.g(GDriver::sine_z(c, k))
                .payoff(payoff("smooth-bump")?)
                .lipschitz(0.0, (c * k).abs())
                .constants(second((c * k * k).abs()))
        }
        "kinked" => {
            let kappa = get("kappa", 0.5);
            let r = get("r", 0.05);
            b.b(Coefficient::linear(-kappa))
                .f(FDriver::linear_y(r))
                .payoff(payoff("abs")?)
                .lipschitz(r.abs(), 0.0)
                .constants(GrowthConstants {
                    l1: kappa.abs().max(r.abs()).max(1.0),
                    ..second(0.0)
                })
        }
        "counterexample-weight" => b
            .g(GDriver::linear_z(1.0))
            .payoff(payoff("zero")?)
            .lipschitz(0.0, 1.0)
            .constants(second(0.0)),
        _ => unreachable!(),
    };
    spec.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kv: &[(&str, f64)]) -> Params {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn every_preset_passes_self_check() {
        for name in DRIVER_PRESETS {
            let p = if *name == "linear-h" {
                params(&[("c", 0.5)])
            } else {
                Params::new()
            };
            let d = preset_driver(name, &p).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(d.has_second_derivatives(), "{name}");
        }
    }

    #[test]
    fn zero_preset_is_identity_problem() {
        let d = preset_driver("zero", &Params::new()).unwrap();
        assert!(d.is_pure_g_heat());
        assert_eq!(d.phi.eval(1.7), 0.0);
    }

    #[test]
    fn quadratic_preset() {
        let d = preset_driver("quadratic", &Params::new()).unwrap();
        assert_eq!(d.phi.eval(3.0), 9.0);
        assert_eq!(d.constants.m, 1);
        assert!(d.is_pure_g_heat());
    }

    #[test]
    fn linear_h_preset() {
        let d = preset_driver("linear-h", &params(&[("c", 0.5)])).unwrap();
        assert_eq!(d.g.eval(0.3, 1.0, 2.0, -1.0), 0.5);
        assert_eq!(d.h.eval(0.3, 1.0), 0.0);
        assert!(d.structure().h_zero && !d.structure().g_zero);
    }

    #[test]
    fn preset_errors() {
        assert!(matches!(
            preset_driver("nope", &Params::new()),
            Err(Error::UnknownPreset(_))
        ));
        assert!(matches!(
            preset_driver("linear-h", &Params::new()),
            Err(Error::MissingParameter { .. })
        ));
        assert!(preset_driver("quadratic", &params(&[("typo", 1.0)])).is_err());
    }

    #[test]
    fn abs_one_sided_derivatives() {
        let p = Payoff::preset("abs", &Params::new()).unwrap();
        assert_eq!((p.d_right)(0.0), 1.0);
        assert_eq!((p.d_left)(0.0), -1.0);
        assert_eq!((p.d_left)(0.5), 1.0);
    }

    #[test]
    fn self_check_catches_wrong_derivative() {
        let bad = Payoff::smooth("bad", |x| x * x, |x| 3.0 * x, |_| 2.0, 10.0, 1);
        let err = DriverSpec::builder("bad").payoff(bad).build().unwrap_err();
        assert!(matches!(err, Error::DerivativeMismatch { .. }), "{err}");
    }

    #[test]
    fn growth_check_catches_understated_constant() {
        let p = Payoff {
            l1: 0.1,
            ..Payoff::preset("quadratic", &params(&[("a", 5.0)])).unwrap()
        };
        let spec = DriverSpec::builder("x").build().unwrap();
        let mut spec2 = spec.clone();
        spec2.phi = p;
        assert!(matches!(spec2.self_check(), Err(Error::GrowthViolation(_))));
    }
}
