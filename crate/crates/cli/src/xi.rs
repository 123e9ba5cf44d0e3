//! Named cylinder functionals for the `cylinder` and `doob` subcommands.
//! Each takes the path positions `B_{t_1}, …, B_{t_N}`.

use glab::gcore::CylinderFunctional;

use crate::CliError;

pub const XI_PRESETS: &[&str] = &[
    "abs-terminal",
    "quadratic-terminal",
    "abs-sum",
    "running-max",
    "cos-sum",
];

pub fn cylinder(name: &str, times: Vec<f64>) -> Result<CylinderFunctional, CliError> {
    let positions = |inc: &[f64]| {
        inc.iter()
            .scan(0.0, |b, d| {
                *b += d;
                Some(*b)
            })
            .collect::<Vec<f64>>()
    };
    let xi = match name {
        "abs-terminal" => {
            CylinderFunctional::new(times, move |v| positions(v).last().unwrap().abs())
        }
        "quadratic-terminal" => {
            CylinderFunctional::new(times, move |v| positions(v).last().unwrap().powi(2))
        }
        "abs-sum" => {
            CylinderFunctional::new(times, move |v| positions(v).iter().map(|b| b.abs()).sum())
        }
        "running-max" => CylinderFunctional::new(times, move |v| {
            positions(v).into_iter().fold(f64::NEG_INFINITY, f64::max)
        }),
        "cos-sum" => {
            CylinderFunctional::new(times, move |v| positions(v).iter().sum::<f64>().cos())
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown functional '{other}' (expected one of {})",
                XI_PRESETS.join(", ")
            )))
        }
    };
    Ok(xi?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_on_positions() {
        let times = vec![0.5, 1.0];
        let inc = [1.0, -3.0];
        assert_eq!(
            cylinder("abs-terminal", times.clone()).unwrap().eval(&inc),
            2.0
        );
        assert_eq!(cylinder("abs-sum", times.clone()).unwrap().eval(&inc), 3.0);
        assert_eq!(
            cylinder("running-max", times.clone()).unwrap().eval(&inc),
            1.0
        );
        assert!(cylinder("nope", times).is_err());
    }
}
