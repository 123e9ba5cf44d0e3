use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::mean_and_se;
use crate::report::fit_slope;
use crate::scenario::{path_rng, McSpec};

/// `(5/4)·T^{4/5}·ε^{−2/5}`.
pub fn counterexample_bound(horizon: f64, eps: f64) -> f64 {
    1.25 * horizon.powf(0.8) * eps.powf(-0.4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub eps: f64,
    pub bound: f64,
    /// Estimate under the measure that removes the exponential weight.
    pub estimate: f64,
    pub se: f64,
    pub ratio: f64,
    /// Plain Monte Carlo of the weighted functional, for comparison.
    pub naive: f64,
    pub naive_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub horizon: f64,
    pub rows: Vec<CounterexampleRow>,
    /// Log-log slope of the bound against ε.
    pub bound_slope: f64,
    /// Log-log slope of the estimates against ε.
    pub estimate_slope: f64,
}

/// Rank-one coupling `B = εW`, `B̃ = W/ε`, `X_t = exp(W_t/ε − t/(2ε²))`.
/// The functional `X_T·∫(⟨B⟩_s)^{−1/5}dB_s` equals `X_T·∫c(s)dW_s` with
/// `c(s) = ε^{3/5}s^{−1/5}`.
///
/// `X_T` is the density of the measure under which `W` gains drift `1/ε`,
/// so the weighted mean is `E[∫c(s)(dW̃_s + ds/ε)]` for a Brownian `W̃`.
/// The first step is integrated exactly (`∫₀^{dt}s^{−1/5}dW̃` is Gaussian
/// with variance `(5/3)dt^{3/5}`), later steps by the midpoint rule.
pub fn counterexample_demo(
    horizon: f64,
    eps_list: &[f64],
    mc: &McSpec,
) -> Result<CounterexampleReport> {
    mc.validate()?;
    if eps_list.is_empty() || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::domain(format!(
            "ε values must be positive, got {eps_list:?}"
        )));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::domain("ε values must be strictly decreasing"));
    }
    if !(horizon > 0.0) {
        return Err(Error::domain("horizon must be positive"));
    }
    let n = mc.n_steps;
    let dt = horizon / n as f64;
    let first_var = 5.0 / 3.0 * dt.powf(0.6);
    let first_drift = 1.25 * dt.powf(0.8);
    let head_loading = first_drift / dt.sqrt();
    let head_residual = (first_var - head_loading * head_loading).sqrt();
    let drift = first_drift + weights_sum(n, dt);
    let weights: Vec<f64> = (1..n).map(|k| ((k as f64 + 0.5) * dt).powf(-0.2)).collect();
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let scale = eps.powf(0.6);
            let samples = mc.exec.map(mc.n_paths, |p| {
                let mut rng = path_rng(mc.seed, p);
                // (∫₀^{dt}s^{−1/5}dW, W_dt) drawn jointly.
                let (z0, z1): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                let mut w_t = dt.sqrt() * z0;
                let mut noise = head_loading * z0 + head_residual * z1;
                for c in &weights {
                    let dw = dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    noise += c * dw;
                    w_t += dw;
                }
                let tilted = scale * (noise + drift / eps);
                let density = (w_t / eps - horizon / (2.0 * eps * eps)).exp();
                (tilted, density * scale * noise)
            });
            let (tilted, naive): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
            let (estimate, se) = mean_and_se(&tilted);
            let (naive, naive_se) = mean_and_se(&naive);
            let bound = counterexample_bound(horizon, eps);
            CounterexampleRow {
                eps,
                bound,
                estimate,
                se,
                ratio: estimate / bound,
                naive,
                naive_se,
            }
        })
        .collect::<Vec<_>>();
    let log_eps: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
    let slope = |f: &dyn Fn(&CounterexampleRow) -> f64| {
        if rows.len() < 2 {
            return f64::NAN;
        }
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        fit_slope(&log_eps, &ys)
    };
    Ok(CounterexampleReport {
        horizon,
        bound_slope: slope(&|r| r.bound),
        estimate_slope: slope(&|r| r.estimate),
        rows,
    })
}

fn weights_sum(n: usize, dt: f64) -> f64 {
    (1..n)
        .map(|k| ((k as f64 + 0.5) * dt).powf(-0.2) * dt)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bound_values() {
        assert_abs_diff_eq!(counterexample_bound(1.0, 1.0), 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(
            counterexample_bound(1.0, 0.01),
            1.25 * 10f64.powf(0.8),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(counterexample_bound(1.0, 0.01), 7.887, epsilon = 1e-3);
    }

    #[test]
    fn estimates_track_the_bound() {
        let r =
            counterexample_demo(1.0, &[0.2, 0.1, 0.05, 0.025], &McSpec::new(4000, 200, 5)).unwrap();
        assert_abs_diff_eq!(r.bound_slope, -0.4, epsilon = 1e-12);
        for row in &r.rows {
            assert!(row.ratio >= 0.95, "{row:?}");
        }
        assert!(counterexample_demo(1.0, &[0.1, 0.0], &McSpec::new(1, 1, 0)).is_err());
    }
}
