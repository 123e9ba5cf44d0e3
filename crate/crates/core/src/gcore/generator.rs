use serde::Serialize;

use crate::error::{Error, Result};

/// One-dimensional sublinear generator
/// `G(a) = ½(σ_high²·a⁺ − σ_low²·a⁻)`, i.e. half the supremum of `a·v` over
/// the variance interval `[σ_low², σ_high²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GFunction1D {
    sigma_low: f64,
    sigma_high: f64,
}

impl GFunction1D {
    pub fn new(sigma_low: f64, sigma_high: f64) -> Result<Self> {
        if !(sigma_low.is_finite() && sigma_high.is_finite()) {
            return Err(Error::domain("volatility bounds must be finite"));
        }
        if sigma_low < 0.0 {
            return Err(Error::domain(format!("sigma_low = {sigma_low} < 0")));
        }
        if sigma_high <= 0.0 {
            return Err(Error::domain(format!("sigma_high = {sigma_high} <= 0")));
        }
        if sigma_low > sigma_high {
            return Err(Error::domain(format!(
                "sigma_low = {sigma_low} > sigma_high = {sigma_high}"
            )));
        }
        Ok(Self {
            sigma_low,
            sigma_high,
        })
    }

    pub fn sigma_low(&self) -> f64 {
        self.sigma_low
    }

    pub fn sigma_high(&self) -> f64 {
        self.sigma_high
    }

    /// True when the uncertainty interval contains zero volatility.
    pub fn is_degenerate(&self) -> bool {
        self.sigma_low == 0.0
    }

    pub fn eval(&self, a: f64) -> f64 {
        if a >= 0.0 {
            0.5 * self.sigma_high * self.sigma_high * a
        } else {
            0.5 * self.sigma_low * self.sigma_low * a
        }
    }

    /// The volatility attaining the supremum in `G(a)`; ties go to the
    /// upper endpoint.
    pub fn argmax(&self, a: f64) -> f64 {
        if a >= 0.0 {
            self.sigma_high
        } else {
            self.sigma_low
        }
    }

    pub fn contains(&self, sigma: f64) -> bool {
        sigma >= self.sigma_low && sigma <= self.sigma_high
    }

    /// `G_ε(a) = ½[(σ̄² + ε²)a⁺ − ε²a⁻]`: the uniformly elliptic
    /// regularization of a degenerate generator.
    pub fn regularize(&self, eps: f64) -> Result<Self> {
        if !self.is_degenerate() {
            return Err(Error::domain(
                "only a degenerate generator (sigma_low = 0) can be regularized",
            ));
        }
        if !(eps > 0.0 && eps < self.sigma_high) {
            return Err(Error::domain(format!(
                "eps = {eps} must lie in (0, sigma_high = {})",
                self.sigma_high
            )));
        }
        Self::new(eps, (self.sigma_high * self.sigma_high + eps * eps).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn catalog_values() {
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        assert_eq!(g.eval(2.0), 1.0);
        assert_eq!(g.eval(-2.0), 0.0);
        assert!(g.is_degenerate());
        let g = GFunction1D::new(0.5, 1.0).unwrap();
        assert_eq!(g.eval(-2.0), -0.25);
        assert!(!g.is_degenerate());
    }

    #[test]
    fn regularized_values() {
        let g = GFunction1D::new(0.0, 1.0).unwrap().regularize(0.1).unwrap();
        assert_abs_diff_eq!(g.eval(-2.0), -0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(g.eval(2.0), 1.01, epsilon = 1e-15);
        assert_eq!(g.sigma_low(), 0.1);
    }

    #[test]
    fn regularization_error_is_half_eps_squared_times_a() {
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        let eps = 0.05;
        let ge = g.regularize(eps).unwrap();
        for k in 0..=200 {
            let a = -10.0 + 0.1 * k as f64;
            let diff = (ge.eval(a) - g.eval(a)).abs();
            assert_abs_diff_eq!(diff, 0.5 * eps * eps * a.abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(GFunction1D::new(-0.1, 1.0).is_err());
        assert!(GFunction1D::new(0.0, 0.0).is_err());
        assert!(GFunction1D::new(1.5, 1.0).is_err());
        let g = GFunction1D::new(0.0, 1.0).unwrap();
        assert!(g.regularize(0.0).is_err());
        assert!(g.regularize(1.0).is_err());
        let nd = GFunction1D::new(0.2, 1.0).unwrap();
        assert!(nd.regularize(0.1).is_err());
    }
}
