use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type CylinderFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `ψ(B_{t₁}, B_{t₂} − B_{t₁}, …, B_{t_N} − B_{t_{N−1}})`: a Lipschitz
/// function of finitely many increments of the canonical process.
#[derive(Clone)]
pub struct CylinderFunctional {
    times: Vec<f64>,
    psi: CylinderFn,
}

impl fmt::Debug for CylinderFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylinderFunctional")
            .field("times", &self.times)
            .finish_non_exhaustive()
    }
}

impl CylinderFunctional {
    pub fn new<F>(times: Vec<f64>, psi: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if times.is_empty() {
            return Err(Error::domain(
                "a cylinder functional needs at least one time",
            ));
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain(format!(
                "times {times:?} must satisfy 0 < t1 < ... < tN"
            )));
        }
        Ok(Self {
            times,
            psi: Arc::new(psi),
        })
    }

    /// Single-time functional `φ(B_T)`.
    pub fn terminal<F>(horizon: f64, phi: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(vec![horizon], move |args| phi(args[0]))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Length of the `i`-th increment window (0-based).
    pub fn stage_length(&self, i: usize) -> f64 {
        if i == 0 {
            self.times[0]
        } else {
            self.times[i] - self.times[i - 1]
        }
    }

    pub fn eval(&self, increments: &[f64]) -> f64 {
        (self.psi)(increments)
    }

    /// `|ψ|^p` on the same times.
    pub fn abs_pow(&self, p: f64) -> Self {
        let psi = self.psi.clone();
        Self {
            times: self.times.clone(),
            psi: Arc::new(move |a| psi(a).abs().powf(p)),
        }
    }

    /// Smoke check on a box of half-width `radius`: ψ must be finite and its
    /// difference quotients at step 1e-7 must stay below `lip_cap`.
    pub fn check_lipschitz(&self, radius: f64, lip_cap: f64) -> Result<()> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_c71d);
        let n = self.len();
        let h = 1e-7;
        let mut p = vec![0.0; n];
        for _ in 0..256 {
            for v in p.iter_mut() {
                *v = rng.random_range(-radius..radius);
            }
            let base = self.eval(&p);
            if !base.is_finite() {
                return Err(Error::domain(format!("psi not finite at {p:?}")));
            }
            for j in 0..n {
                let mut q = p.clone();
                q[j] += h;
                let ratio = (self.eval(&q) - base).abs() / h;
                if !(ratio <= lip_cap) {
                    return Err(Error::domain(format!(
                        "psi is not Lipschitz near {p:?}: difference quotient {ratio:e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(CylinderFunctional::new(vec![], |_| 0.0).is_err());
        assert!(CylinderFunctional::new(vec![0.0, 1.0], |_| 0.0).is_err());
        assert!(CylinderFunctional::new(vec![0.5, 0.5], |_| 0.0).is_err());
        let x = CylinderFunctional::new(vec![0.5, 1.0], |a| a[0] + a[1]).unwrap();
        assert_eq!(x.stage_length(1), 0.5);
        assert_eq!(x.eval(&[1.0, 2.0]), 3.0);
    }

    #[test]
    fn lipschitz_smoke_check() {
        let ok = CylinderFunctional::new(vec![0.5, 1.0], |a| a[0] * a[1]).unwrap();
        assert!(ok.check_lipschitz(5.0, 1e6).is_ok());
        let nan = CylinderFunctional::new(vec![1.0], |a| 1.0 / a[0].signum().max(0.0)).unwrap();
        assert!(nan.check_lipschitz(5.0, 1e6).is_err());
    }
}
