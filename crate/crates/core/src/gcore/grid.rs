use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform space-time grid for the terminal-value PDE solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub horizon: f64,
    pub nt: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nx: usize, horizon: f64, nt: usize) -> Result<Self> {
        let grid = Self {
            x_min,
            x_max,
            nx,
            horizon,
            nt,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Domain `[x0 − 6σ_high√T − pad, x0 + 6σ_high√T + pad]`; `nt` is left at
    /// 1 and is normally replaced by a CFL-derived count.
    pub fn centered(x0: f64, sigma_high: f64, horizon: f64, pad: f64, nx: usize) -> Result<Self> {
        let half = 6.0 * sigma_high * horizon.max(0.0).sqrt() + pad;
        Self::new(x0 - half, x0 + half, nx, horizon, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return Err(Error::domain(format!(
                "grid bounds [{}, {}] must be finite with x_min < x_max",
                self.x_min, self.x_max
            )));
        }
        if self.nx < 3 {
            return Err(Error::domain(format!("nx = {} < 3", self.nx)));
        }
        if self.nt < 1 {
            return Err(Error::domain("nt must be at least 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain(format!(
                "horizon T = {} must be > 0",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.nt {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Same grid with the smallest step count whose step is ≤ `dt_max`.
    pub fn with_time_step(&self, dt_max: f64) -> Self {
        let nt = ((self.horizon / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self { nt, ..*self }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self { horizon, ..*self }
    }

    /// Nodes in the central half of the domain, away from the boundary
    /// closure.
    pub fn core_range(&self) -> std::ops::Range<usize> {
        let q = ((self.nx - 1) / 4).max(1);
        q..self.nx - q
    }

    /// `nx → 2nx − 1` keeps every old node on the new grid.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            ..*self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_endpoints() {
        let g = Grid1D::new(-1.0, 1.0, 21, 1.0, 10).unwrap();
        assert!((g.dx() - 0.1).abs() < 1e-15);
        assert_eq!(g.x(20), 1.0);
        assert_eq!(g.t(10), 1.0);
        assert_eq!(g.with_time_step(0.009).nt, 112);
        assert_eq!(g.with_time_step(0.01).nt, 100);
    }

    #[test]
    fn invalid_grids() {
        assert!(Grid1D::new(1.0, 1.0, 10, 1.0, 1).is_err());
        assert!(Grid1D::new(0.0, 1.0, 2, 1.0, 1).is_err());
        assert!(Grid1D::new(0.0, 1.0, 5, 0.0, 1).is_err());
        assert!(Grid1D::new(0.0, 1.0, 5, 1.0, 0).is_err());
    }
}
