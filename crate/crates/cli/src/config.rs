//! Run configuration: built-in defaults, then the optional TOML file, then
//! command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use glab::gcore::{preset_driver, DriverSpec, GFunction1D, Grid1D, Params, Payoff};
use glab::pde::PdeForm;
use glab::scenario::McSpec;
use glab::Execution;

use crate::{CliError, CommonArgs};

pub const DEFAULT_OUTPUT_DIR: &str = "glab-out";
const GRID_PAD: f64 = 2.0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    generator: GeneratorSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    driver: BTreeMap<String, toml::Value>,
    #[serde(default)]
    schedule: Schedule,
    #[serde(default)]
    mc: McSection,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorSection {
    sigma_low: Option<f64>,
    sigma_high: Option<f64>,
    eps_schedule: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    x_min: Option<f64>,
    x_max: Option<f64>,
    nx: Option<usize>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    cfl_safety: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct McSection {
    n_paths: Option<usize>,
    n_steps: Option<usize>,
    seed: Option<u64>,
}

/// Experiment-specific knobs; each subcommand reads the ones it needs and
/// its flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub p: Option<f64>,
    pub p_prime: Option<f64>,
    pub steps: Option<usize>,
    pub times: Option<Vec<f64>>,
    pub x: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub refinements: Option<usize>,
    pub xi: Option<String>,
    pub payoff: Option<String>,
    pub form: Option<String>,
    pub level_stride: Option<usize>,
    pub second_preset: Option<String>,
    pub second_params: Option<BTreeMap<String, f64>>,
}

/// Effective configuration after merging; echoed into every summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub eps_schedule: Vec<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub nx: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub cfl_safety: f64,
    pub preset: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub schedule: Schedule,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn load(common: &CommonArgs) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        let (preset, params) = driver_section(&file.driver)?;
        let mut params = params;
        for (k, v) in &common.params {
            params.insert(k.clone(), *v);
        }
        let cfg = RunConfig {
            sigma_low: common.sigma_low.or(file.generator.sigma_low).unwrap_or(0.0),
            sigma_high: common
                .sigma_high
                .or(file.generator.sigma_high)
                .unwrap_or(1.0),
            eps_schedule: common
                .eps
                .clone()
                .or(file.generator.eps_schedule)
                .unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025]),
            x_min: common.x_min.or(file.grid.x_min),
            x_max: common.x_max.or(file.grid.x_max),
            nx: common.nx.or(file.grid.nx).unwrap_or(201),
            horizon: common.horizon.or(file.grid.horizon).unwrap_or(1.0),
            cfl_safety: common.cfl_safety.or(file.grid.cfl_safety).unwrap_or(0.9),
            preset: common.preset.clone().or(preset),
            params,
            schedule: file.schedule,
            n_paths: common.paths.or(file.mc.n_paths),
            n_steps: common.mc_steps.or(file.mc.n_steps),
            seed: common.seed.or(file.mc.seed).or(file.seed).unwrap_or(0),
            workers: common.workers.or(file.workers),
            output_dir: common
                .output_dir
                .clone()
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.generator()?;
        self.grid()?;
        if let Some(p) = &self.preset {
            // Parameters may belong to a payoff preset, so only the name is
            // checked here.
            if let Err(e @ glab::Error::UnknownPreset(_)) = preset_driver(p, &Params::new()) {
                return Err(e.into());
            }
        }
        if self.eps_schedule.is_empty() {
            return Err(CliError::Config("eps schedule is empty".into()));
        }
        if !(self.cfl_safety > 0.0) {
            return Err(CliError::Config(format!(
                "cfl_safety must be positive, got {}",
                self.cfl_safety
            )));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<GFunction1D, CliError> {
        Ok(GFunction1D::new(self.sigma_low, self.sigma_high)?)
    }

    pub fn grid(&self) -> Result<Grid1D, CliError> {
        let grid = match (self.x_min, self.x_max) {
            (Some(lo), Some(hi)) => Grid1D::new(lo, hi, self.nx, self.horizon, 1)?,
            (None, None) => {
                Grid1D::centered(0.0, self.sigma_high, self.horizon, GRID_PAD, self.nx)?
            }
            _ => {
                return Err(CliError::Config(
                    "x_min and x_max must be given together".into(),
                ))
            }
        };
        Ok(grid)
    }

    /// The configured driver, or `default` with its own parameters when no
    /// preset was chosen.
    pub fn driver(&self, default: (&str, &[(&str, f64)])) -> Result<DriverSpec, CliError> {
        let (name, params) = self.driver_choice(default);
        Ok(preset_driver(&name, &params)?)
    }

    pub fn driver_choice(&self, default: (&str, &[(&str, f64)])) -> (String, Params) {
        match &self.preset {
            Some(p) => (p.clone(), self.params.clone()),
            None => {
                let mut params: Params =
                    default.1.iter().map(|(k, v)| (k.to_string(), *v)).collect();
                params.extend(self.params.clone());
                (default.0.to_string(), params)
            }
        }
    }

    pub fn payoff(&self, name: &str) -> Result<Payoff, CliError> {
        Ok(Payoff::preset(name, &self.params)?)
    }

    /// Regularized form for drivers that live in the `g` slot, the full
    /// Feynman–Kac form otherwise; `--form` overrides.
    pub fn form(&self, flag: Option<&str>, driver: &DriverSpec) -> Result<PdeForm, CliError> {
        match flag.or(self.schedule.form.as_deref()) {
            Some("bsde") | Some("regularized") => Ok(PdeForm::RegularizedBsde),
            Some("markovian") | Some("fbsde") => Ok(PdeForm::MarkovianFbsde),
            Some(other) => Err(CliError::Config(format!(
                "unknown form '{other}' (expected markovian or bsde)"
            ))),
            None => Ok(match driver.name.as_str() {
                "linear-h" | "sine-gz" | "counterexample-weight" => PdeForm::RegularizedBsde,
                _ => PdeForm::MarkovianFbsde,
            }),
        }
    }

    pub fn execution(&self) -> Execution {
        match self.workers {
            Some(1) => Execution::Sequential,
            _ => Execution::Parallel,
        }
    }

    pub fn mc(&self, paths: usize, steps: usize) -> McSpec {
        McSpec::new(
            self.n_paths.unwrap_or(paths),
            self.n_steps.unwrap_or(steps),
            self.seed,
        )
        .with_exec(self.execution())
    }
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_config(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| format!("line {}: ", text[..s.start].matches('\n').count() + 1))
            .unwrap_or_default();
        format!("{line}{}", e.message())
    })
}

fn driver_section(
    section: &BTreeMap<String, toml::Value>,
) -> Result<(Option<String>, BTreeMap<String, f64>), CliError> {
    let mut preset = None;
    let mut params = BTreeMap::new();
    for (key, value) in section {
        match (key.as_str(), value) {
            ("preset", toml::Value::String(s)) => preset = Some(s.clone()),
            (_, toml::Value::Float(v)) => {
                params.insert(key.clone(), *v);
            }
            (_, toml::Value::Integer(v)) => {
                params.insert(key.clone(), *v as f64);
            }
            _ => {
                return Err(CliError::Config(format!(
                    "[driver] {key}: expected a number{}",
                    if key == "preset" {
                        " or preset name"
                    } else {
                        ""
                    }
                )))
            }
        }
    }
    Ok((preset, params))
}

/// `key=value` with a numeric value.
pub fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("'{v}' is not a number"))?;
    Ok((k.trim().to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg = parse_config(
            "seed = 7\n[generator]\nsigma_low = 0.5\nsigma_high = 1.0\n[grid]\nnx = 101\nT = 2\n\
             [driver]\npreset = \"quadratic\"\na = 2\n[schedule]\np = 2.0\n[mc]\nn_paths = 100\n",
        )
        .unwrap();
        assert_eq!(cfg.generator.sigma_low, Some(0.5));
        assert_eq!(cfg.grid.horizon, Some(2.0));
        let (preset, params) = driver_section(&cfg.driver).unwrap();
        assert_eq!(preset.as_deref(), Some("quadratic"));
        assert_eq!(params["a"], 2.0);
        assert_eq!(cfg.mc.n_paths, Some(100));
    }

    #[test]
    fn reports_line_of_error() {
        let err = parse_config("[grid]\nnx = 101\nbogus = 1\n").unwrap_err();
        assert!(err.starts_with("line 3"), "{err}");
        let err = parse_config("[grid]\nnx = = 3\n").unwrap_err();
        assert!(err.starts_with("line 2"), "{err}");
    }

    #[test]
    fn param_flag() {
        assert_eq!(parse_param("c=0.5").unwrap(), ("c".to_string(), 0.5));
        assert!(parse_param("c").is_err());
        assert!(parse_param("c=x").is_err());
    }
}
