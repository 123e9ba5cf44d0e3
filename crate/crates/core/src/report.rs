//! Machine-readable run summaries and CSV helpers shared by the experiments.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;
use serde_json::Value;

/// `{experiment, parameters, values, verdicts}`. Maps are ordered so the
/// serialized form is byte-stable.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub parameters: Value,
    pub values: Value,
    pub verdicts: BTreeMap<String, bool>,
}

impl Summary {
    pub fn new(experiment: &str, parameters: Value, values: Value) -> Self {
        Self {
            experiment: experiment.to_string(),
            parameters,
            values,
            verdicts: BTreeMap::new(),
        }
    }

    pub fn verdict(mut self, name: &str, pass: bool) -> Self {
        self.verdicts.insert(name.to_string(), pass);
        self
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(|v| *v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Writes a header and rows of floats with 16 significant digits.
pub fn write_table<W: Write>(out: &mut W, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.15e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((fit_slope(&xs, &ys) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn table_format() {
        let mut buf = Vec::new();
        write_table(&mut buf, &["a", "b"], &[vec![1.0, 0.1]]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "a,b\n1.000000000000000e0,1.000000000000000e-1\n"
        );
    }
}
