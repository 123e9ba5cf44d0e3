//! One function per subcommand. Each returns the summary, the CSV tables
//! and a one-line headline; nothing is written until the run succeeds.

use std::fs;
use std::path::Path;

use clap::Args;
use serde::Serialize;
use serde_json::{json, Value};

use glab::gbsde::{
    convergence_report, counterexample_demo, dynamic_programming_check, refinement_ladder,
    second_derivative_scan, semiconvexity_scan, solve_gbsde, stability_check, BsdeProblem,
    BsdeSolutionFamily,
};
use glab::gcore::{preset_driver, CylinderFunctional, DriverSpec};
use glab::gexpect::{
    default_stage_grids, doob_check, gexpect_cylinder, gexpect_terminal, lattice_oracle,
    LatticeSpec,
};
use glab::pde::{
    cfl_timestep, derivatives, solve_terminal_pde, write_solution_csv, PdeForm, PdeProblem,
    PdeSolution,
};
use glab::report::{write_table, Summary};
use glab::scenario::{estimate_dt, estimate_dx, write_sensitivity_csv, Sensitivity};

use crate::config::RunConfig;
use crate::{xi, CliError, Command};

const ORACLE_TOL: f64 = 2e-2;

pub struct Artifacts {
    pub summary: Summary,
    pub tables: Vec<(String, Vec<u8>)>,
    pub headline: String,
}

impl Artifacts {
    fn new(summary: Summary, headline: String) -> Self {
        Self {
            summary,
            tables: Vec::new(),
            headline,
        }
    }

    fn table(mut self, name: &str, bytes: Vec<u8>) -> Self {
        self.tables.push((name.to_string(), bytes));
        self
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(dir.join("summary.json"), self.summary.to_json() + "\n")?;
        for (name, bytes) in &self.tables {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

fn table(header: &[&str], rows: &[Vec<f64>]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_table(&mut buf, header, rows).expect("writing to memory");
    buf
}

fn params<A: Serialize>(cfg: &RunConfig, args: &A) -> Value {
    json!({ "config": cfg, "args": args })
}

fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>, default: T) -> T {
    flag.clone().or_else(|| file.clone()).unwrap_or(default)
}

pub fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Artifacts, CliError> {
    match command {
        Command::Gexpect(a) => gexpect(cfg, a),
        Command::Cylinder(a) => cylinder(cfg, a),
        Command::Doob(a) => doob(cfg, a),
        Command::SolvePde(a) => solve_pde(cfg, a),
        Command::Gbsde(a) => gbsde(cfg, a),
        Command::Convergence(a) => convergence(cfg, a),
        Command::Curvature(a) => curvature(cfg, a),
        Command::SensitivityX(a) => sensitivity(cfg, a, Direction::Space),
        Command::SensitivityT(a) => sensitivity(cfg, a, Direction::Time),
        Command::Kink(a) => kink(cfg, a),
        Command::Semiconvexity(a) => semiconvexity(cfg, a),
        Command::DpCheck(a) => dp_check(cfg, a),
        Command::Counterexample(a) => counterexample(cfg, a),
        Command::Stability(a) => stability(cfg, a),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GexpectArgs {
    /// Payoff preset
    #[arg(long)]
    pub payoff: Option<String>,
    /// Steps of the lattice cross-check
    #[arg(long)]
    pub steps: Option<usize>,
}

fn gexpect(cfg: &RunConfig, a: &GexpectArgs) -> Result<Artifacts, CliError> {
    let name = pick(&a.payoff, &cfg.schedule.payoff, "quadratic".to_string());
    let steps = pick(&a.steps, &cfg.schedule.steps, 64);
    let phi = cfg.payoff(&name)?;
    let g = cfg.generator()?;
    let pde = gexpect_terminal(&phi, cfg.horizon, &g, &cfg.grid()?)?;
    let f = phi.value.clone();
    let terminal = CylinderFunctional::terminal(cfg.horizon, move |b| f(b))?;
    let lattice = lattice_oracle(
        &terminal,
        &g,
        &LatticeSpec::new(steps, cfg.horizon, &g)?.with_exec(cfg.execution()),
    )?;
    let gap = (pde - lattice).abs();
    let summary = Summary::new(
        "gexpect",
        params(cfg, a),
        json!({ "value": pde, "lattice": lattice, "gap": gap }),
    )
    .verdict("lattice_agreement", gap <= ORACLE_TOL);
    let headline =
        format!("gexpect: E[{name}(B_T)] = {pde:.6} (lattice {lattice:.6}, gap {gap:.2e})");
    Ok(Artifacts::new(summary, headline).table(
        "gexpect.csv",
        table(&["pde", "lattice", "gap"], &[vec![pde, lattice, gap]]),
    ))
}

#[derive(Debug, Args, Serialize)]
pub struct CylinderArgs {
    /// Functional preset: abs-terminal, quadratic-terminal, abs-sum, running-max, cos-sum
    #[arg(long)]
    pub xi: Option<String>,
    /// Observation times, comma separated
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Steps of the augmented lattice
    #[arg(long)]
    pub steps: Option<usize>,
    /// Nodes per stage grid
    #[arg(long)]
    pub stage_nx: Option<usize>,
}

fn cylinder_of(
    cfg: &RunConfig,
    xi_flag: &Option<String>,
    times: &Option<Vec<f64>>,
    default: &str,
) -> Result<(String, CylinderFunctional), CliError> {
    let name = pick(xi_flag, &cfg.schedule.xi, default.to_string());
    let times = pick(
        times,
        &cfg.schedule.times,
        vec![0.5 * cfg.horizon, cfg.horizon],
    );
    Ok((name.clone(), xi::cylinder(&name, times)?))
}

fn cylinder(cfg: &RunConfig, a: &CylinderArgs) -> Result<Artifacts, CliError> {
    let (name, psi) = cylinder_of(cfg, &a.xi, &a.times, "abs-sum")?;
    let g = cfg.generator()?;
    let steps = pick(&a.steps, &cfg.schedule.steps, 64);
    let grids = default_stage_grids(&psi, &g, 1.5, a.stage_nx.unwrap_or(121))?;
    let recursion = gexpect_cylinder(&psi, &g, &grids, cfg.execution())?;
    let lattice = lattice_oracle(
        &psi,
        &g,
        &LatticeSpec::new(steps, psi.horizon(), &g)?.with_exec(cfg.execution()),
    )?;
    let gap = (recursion - lattice).abs();
    let summary = Summary::new(
        "cylinder",
        params(cfg, a),
        json!({ "xi": name, "times": psi.times(), "value": recursion, "lattice": lattice, "gap": gap }),
    )
    .verdict("lattice_agreement", gap <= ORACLE_TOL);
    let headline =
        format!("cylinder: E[{name}] = {recursion:.6} (lattice {lattice:.6}, gap {gap:.2e})");
    Ok(Artifacts::new(summary, headline).table(
        "cylinder.csv",
        table(
            &["recursion", "lattice", "gap"],
            &[vec![recursion, lattice, gap]],
        ),
    ))
}

#[derive(Debug, Args, Serialize)]
pub struct DoobArgs {
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub p_prime: Option<f64>,
    /// Lattice steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Functional preset: abs-terminal, quadratic-terminal, abs-sum, running-max, cos-sum
    #[arg(long)]
    pub xi: Option<String>,
    /// Observation times, comma separated
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
}

fn doob(cfg: &RunConfig, a: &DoobArgs) -> Result<Artifacts, CliError> {
    let (name, xi) = cylinder_of(cfg, &a.xi, &a.times, "abs-terminal")?;
    let p = pick(&a.p, &cfg.schedule.p, 2.0);
    let p_prime = pick(&a.p_prime, &cfg.schedule.p_prime, 4.0);
    let steps = pick(&a.steps, &cfg.schedule.steps, 8);
    let g = cfg.generator()?;
    let spec = LatticeSpec::new(steps, xi.horizon(), &g)?.with_exec(cfg.execution());
    let report = doob_check(&xi, p, p_prime, &g, &spec)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let summary = Summary::new(
        "doob",
        params(cfg, a),
        json!({ "xi": name, "report": report }),
    )
    .verdict("margin_nonnegative", report.margin >= 0.0);
    let headline = format!(
        "doob: C = {:.6}, lhs = {:.6} <= rhs = {:.6} (margin {:.4e})",
        report.c, report.lhs, report.rhs, report.margin
    );
    Ok(Artifacts::new(summary, headline).table("doob.csv", csv))
}

#[derive(Debug, Args, Serialize)]
pub struct SolvePdeArgs {
    /// markovian or bsde
    #[arg(long)]
    pub form: Option<String>,
    /// Time levels between exported rows
    #[arg(long)]
    pub level_stride: Option<usize>,
    /// Point at which u(0, ·) is reported
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
}

fn solve_pde(cfg: &RunConfig, a: &SolvePdeArgs) -> Result<Artifacts, CliError> {
    let driver = cfg.driver(("quadratic", &[]))?;
    let form = cfg.form(a.form.as_deref(), &driver)?;
    let mut g = cfg.generator()?;
    if form == PdeForm::RegularizedBsde && g.is_degenerate() {
        g = g.regularize(cfg.eps_schedule[0])?;
    }
    // A safety factor above 1 is passed through so the solver reports the
    // CFL violation.
    let grid = cfg.grid()?;
    let dt = cfl_timestep(&grid, &g, &driver, 1.0) * cfg.cfl_safety;
    let problem = PdeProblem::new(grid.with_time_step(dt), driver, g, form)?;
    let sol = solve_terminal_pde(&problem)?;
    let x0 = a.x0.unwrap_or(0.0);
    let value = sol.initial_value(x0)?;
    let mut csv = Vec::new();
    write_solution_csv(
        &sol,
        &mut csv,
        pick(&a.level_stride, &cfg.schedule.level_stride, 10),
    )?;
    let summary = Summary::new(
        "solve-pde",
        params(cfg, a),
        json!({ "x0": x0, "value": value, "nt": sol.grid.nt, "dt": sol.dt(), "metadata": sol.metadata }),
    )
    .verdict("finite", sol.u.iter().flatten().all(|v| v.is_finite()));
    let headline = format!(
        "solve-pde: u(0, {x0}) = {value:.6} [{} on {}x{}, cfl {:.3}]",
        problem.driver.name, sol.grid.nx, sol.grid.nt, sol.metadata.cfl_number
    );
    Ok(Artifacts::new(summary, headline).table("solution.csv", csv))
}

#[derive(Debug, Args, Serialize)]
pub struct GbsdeArgs {
    /// markovian or bsde
    #[arg(long)]
    pub form: Option<String>,
    /// Point at which values are reported
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
}

fn family(cfg: &RunConfig, form: Option<&str>) -> Result<BsdeSolutionFamily, CliError> {
    let driver = cfg.driver(("sine-gz", &[]))?;
    let form = cfg.form(form, &driver)?;
    let problem = BsdeProblem::new(driver, cfg.generator()?, cfg.grid()?, form)?;
    Ok(solve_gbsde(&problem, &cfg.eps_schedule, cfg.execution())?)
}

fn family_table(fam: &BsdeSolutionFamily) -> Vec<u8> {
    let grid = fam.grid();
    let mut header = vec!["x".to_string()];
    header.extend(fam.eps_schedule.iter().map(|e| format!("u_eps_{e}")));
    header.push("u_extrapolated".into());
    let rows: Vec<Vec<f64>> = (0..grid.nx)
        .map(|i| {
            let mut row = vec![grid.x(i)];
            row.extend(fam.solutions.iter().map(|s| s.u[0][i]));
            row.push(fam.u0[0][i]);
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    table(&header, &rows)
}

fn gbsde(cfg: &RunConfig, a: &GbsdeArgs) -> Result<Artifacts, CliError> {
    let fam = family(cfg, a.form.as_deref())?;
    let x0 = a.x0.unwrap_or(0.0);
    let values = (0..fam.solutions.len())
        .map(|i| fam.value_at(i, x0))
        .collect::<glab::Result<Vec<_>>>()?;
    let u0 = fam.u0_at(x0)?;
    let summary = Summary::new(
        "gbsde",
        params(cfg, a),
        json!({ "x0": x0, "eps": fam.eps_schedule, "values": values, "extrapolated": u0, "diagnostics": fam.diagnostics }),
    )
    .verdict("finite", fam.u0.iter().flatten().all(|v| v.is_finite()));
    let headline = format!(
        "gbsde: u(0, {x0}) = {u0:.6} extrapolated from eps = {:?} [{}]",
        fam.eps_schedule, fam.problem.driver.name
    );
    Ok(Artifacts::new(summary, headline).table("family.csv", family_table(&fam)))
}

#[derive(Debug, Args, Serialize)]
pub struct ConvergenceArgs {
    /// Exponent of the error bound
    #[arg(long)]
    pub p: Option<f64>,
    /// markovian or bsde
    #[arg(long)]
    pub form: Option<String>,
}

fn convergence(cfg: &RunConfig, a: &ConvergenceArgs) -> Result<Artifacts, CliError> {
    let fam = family(cfg, a.form.as_deref())?;
    let report = convergence_report(&fam, pick(&a.p, &cfg.schedule.p, 1.0))?;
    let rows: Vec<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| vec![r.eps, r.eps_next, r.delta, r.gap, r.bound])
        .collect();
    let in_band = report
        .shrink_factors
        .iter()
        .all(|f| (0.3..=0.8).contains(f));
    let summary = Summary::new("convergence", params(cfg, a), json!({ "report": report }))
        .verdict("within_fitted_bound", report.violations.is_empty())
        .verdict("shrink_in_band", in_band);
    let headline = format!(
        "convergence: deltas {:?}, shrink factors {:?}, rate {:.3}",
        report
            .rows
            .iter()
            .map(|r| format!("{:.3e}", r.delta))
            .collect::<Vec<_>>(),
        report
            .shrink_factors
            .iter()
            .map(|f| format!("{f:.3}"))
            .collect::<Vec<_>>(),
        report.rate
    );
    Ok(Artifacts::new(summary, headline).table(
        "convergence.csv",
        table(&["eps", "eps_next", "delta", "gap", "bound"], &rows),
    ))
}

fn curvature(cfg: &RunConfig, a: &GbsdeArgs) -> Result<Artifacts, CliError> {
    let fam = family(cfg, a.form.as_deref())?;
    let scan = second_derivative_scan(&fam)?;
    let rows: Vec<Vec<f64>> = scan.rows.iter().map(|(e, m)| vec![*e, *m]).collect();
    let summary = Summary::new("curvature", params(cfg, a), json!({ "scan": scan }))
        .verdict("uniform", scan.uniform);
    let headline = format!(
        "curvature: min u_xx {} (uniform: {})",
        scan.rows
            .iter()
            .map(|(e, m)| format!("{e}:{m:.4}"))
            .collect::<Vec<_>>()
            .join(" "),
        scan.uniform
    );
    Ok(Artifacts::new(summary, headline).table("curvature.csv", table(&["eps", "min_uxx"], &rows)))
}

#[derive(Debug, Args, Serialize)]
pub struct SensitivityArgs {
    /// Probe points, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Probe time
    #[arg(long)]
    pub t: Option<f64>,
    /// markovian or bsde
    #[arg(long)]
    pub form: Option<String>,
}

#[derive(Clone, Copy)]
enum Direction {
    Space,
    Time,
}

/// The driver, its PDE solution and the generator the solution was built
/// with (regularized with the first ε in the bsde form).
fn probe_solution(
    cfg: &RunConfig,
    form: Option<&str>,
    default: (&str, &[(&str, f64)]),
) -> Result<(DriverSpec, PdeSolution), CliError> {
    let driver = cfg.driver(default)?;
    let form = cfg.form(form, &driver)?;
    let problem = BsdeProblem::new(driver, cfg.generator()?, cfg.grid()?, form)?;
    let sol = match form {
        PdeForm::RegularizedBsde => solve_gbsde(&problem, &cfg.eps_schedule[..1], cfg.execution())?
            .solutions
            .remove(0),
        _ => problem.solve_direct()?,
    };
    Ok((problem.driver, sol))
}

fn sensitivity_rows(rows: &[Sensitivity]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_sensitivity_csv(rows, &mut buf).expect("writing to memory");
    buf
}

fn sensitivity(
    cfg: &RunConfig,
    a: &SensitivityArgs,
    dir: Direction,
) -> Result<Artifacts, CliError> {
    let (driver, sol) = probe_solution(cfg, a.form.as_deref(), ("sine-gz", &[]))?;
    let fields = derivatives(&sol)?;
    let mc = cfg.mc(10_000, 100);
    let (name, default_t) = match dir {
        Direction::Space => ("sensitivity-x", 0.0),
        Direction::Time => ("sensitivity-t", 0.5 * cfg.horizon),
    };
    let t = pick(&a.t, &cfg.schedule.t, default_t);
    let xs = pick(&a.x, &cfg.schedule.x, vec![-0.5, 0.0, 0.5]);
    let mut rows = Vec::new();
    let mut references = Vec::new();
    let mut agree = true;
    for &x in &xs {
        let (s, table) = match dir {
            Direction::Space => (estimate_dx(&driver, t, x, &sol.g, &sol, &mc)?, &fields.ux),
            Direction::Time => (estimate_dt(&driver, t, x, &sol.g, &sol, &mc)?, &fields.ut),
        };
        let reference = sol.interp_row(&table[sol.level_at(t)], x)?;
        agree &= (s.plus - reference).abs() <= 3.0 * s.se_plus + ORACLE_TOL;
        references.push(reference);
        rows.push(s);
    }
    let summary = Summary::new(
        name,
        params(cfg, a),
        json!({ "rows": rows, "pde_reference": references }),
    )
    .verdict("pde_agreement", agree)
    .verdict("measure_accepted", rows.iter().all(|r| !r.all_rejected));
    let headline = format!(
        "{name}: {}",
        rows.iter()
            .zip(&references)
            .map(|(s, r)| format!("x={}: {:.4} ± {:.4} (pde {r:.4})", s.x, s.plus, s.se_plus))
            .collect::<Vec<_>>()
            .join("; ")
    );
    Ok(Artifacts::new(summary, headline).table("sensitivity.csv", sensitivity_rows(&rows)))
}

#[derive(Debug, Args, Serialize)]
pub struct KinkArgs {
    /// Probe points; defaults to the payoff kinks
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long)]
    pub t: Option<f64>,
}

fn kink(cfg: &RunConfig, a: &KinkArgs) -> Result<Artifacts, CliError> {
    let (driver, sol) = probe_solution(cfg, None, ("abs", &[]))?;
    let mc = cfg.mc(10_000, 100);
    let t = pick(&a.t, &cfg.schedule.t, 0.0);
    let xs = a.x.clone().or(cfg.schedule.x.clone()).unwrap_or_else(|| {
        if driver.phi.kinks.is_empty() {
            vec![0.0]
        } else {
            driver.phi.kinks.clone()
        }
    });
    let mut rows = Vec::new();
    let mut consistent = true;
    for &x in &xs {
        let s = estimate_dx(&driver, t, x, &sol.g, &sol, &mc)?;
        let gap = s.plus - s.minus;
        let noise = 3.0 * (s.se_plus + s.se_minus) + ORACLE_TOL;
        // A diffusing state smooths the kink; a frozen one keeps the jump.
        let diffusing = driver.sigma.eval(t, x) != 0.0 && sol.g.sigma_high() > 0.0;
        consistent &= if diffusing {
            gap.abs() <= noise
        } else {
            gap.abs() > noise
        };
        rows.push(s);
    }
    let gaps: Vec<f64> = rows.iter().map(|s| s.plus - s.minus).collect();
    let summary = Summary::new(
        "kink",
        params(cfg, a),
        json!({ "rows": rows, "gaps": gaps }),
    )
    .verdict("dichotomy", consistent);
    let headline = format!(
        "kink: {}",
        rows.iter()
            .map(|s| format!("x={}: d+ = {:.4}, d- = {:.4}", s.x, s.plus, s.minus))
            .collect::<Vec<_>>()
            .join("; ")
    );
    Ok(Artifacts::new(summary, headline).table("kink.csv", sensitivity_rows(&rows)))
}

#[derive(Debug, Args, Serialize)]
pub struct RefineArgs {
    /// Number of grids, each twice as fine as the last
    #[arg(long)]
    pub refinements: Option<usize>,
}

fn stable_pair(values: &[f64]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    hi == 0.0 || (lo > 0.0 && hi / lo < 2.0)
}

fn semiconvexity(cfg: &RunConfig, a: &RefineArgs) -> Result<Artifacts, CliError> {
    let driver = cfg.driver(("abs", &[("smooth", 0.1)]))?;
    let form = cfg.form(None, &driver)?;
    let problem = BsdeProblem::new(driver, cfg.generator()?, cfg.grid()?, form)?;
    let levels = pick(&a.refinements, &cfg.schedule.refinements, 2);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for sol in refinement_ladder(&problem, levels)? {
        let r = semiconvexity_scan(&problem.with_grid(sol.grid), &sol)?;
        rows.push(vec![
            sol.grid.nx as f64,
            r.c,
            r.max_second_difference,
            r.violations as f64,
        ]);
        reports.push(r);
    }
    let cs: Vec<f64> = reports.iter().map(|r| r.c).collect();
    let summary = Summary::new(
        "semiconvexity",
        params(cfg, a),
        json!({ "levels": reports }),
    )
    .verdict("stable_under_refinement", stable_pair(&cs));
    let headline = format!(
        "semiconvexity: C = {:?} across refinements",
        cs.iter().map(|c| format!("{c:.4e}")).collect::<Vec<_>>()
    );
    Ok(Artifacts::new(summary, headline).table(
        "semiconvexity.csv",
        table(&["nx", "c", "max_second_difference", "violations"], &rows),
    ))
}

#[derive(Debug, Args, Serialize)]
pub struct DpCheckArgs {
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub t2: Option<f64>,
    /// Probe points, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// Lattice steps over [t1, t2]
    #[arg(long)]
    pub steps: Option<usize>,
}

fn dp_check(cfg: &RunConfig, a: &DpCheckArgs) -> Result<Artifacts, CliError> {
    let (driver, sol) = probe_solution(cfg, None, ("sine-gz", &[]))?;
    let problem = BsdeProblem::new(driver, cfg.generator()?, cfg.grid()?, sol.form)?;
    let t1 = pick(&a.t1, &cfg.schedule.t1, 0.25 * cfg.horizon);
    let t2 = pick(&a.t2, &cfg.schedule.t2, 0.75 * cfg.horizon);
    let steps = pick(&a.steps, &cfg.schedule.steps, 16);
    let xs = pick(&a.x, &cfg.schedule.x, vec![-0.5, 0.0, 0.5]);
    let gaps = xs
        .iter()
        .map(|&x| dynamic_programming_check(&problem, &sol, t1, t2, x, steps))
        .collect::<glab::Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = xs
        .iter()
        .zip(&gaps)
        .map(|(x, g)| vec![t1, t2, *x, *g])
        .collect();
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    let summary = Summary::new("dp-check", params(cfg, a), json!({ "x": xs, "gaps": gaps }))
        .verdict("identity_holds", worst <= ORACLE_TOL);
    let headline = format!(
        "dp-check: max gap {worst:.3e} over {} points on [{t1}, {t2}]",
        xs.len()
    );
    Ok(Artifacts::new(summary, headline)
        .table("dp_check.csv", table(&["t1", "t2", "x", "gap"], &rows)))
}

#[derive(Debug, Args, Serialize)]
pub struct CounterexampleArgs {}

fn counterexample(cfg: &RunConfig, a: &CounterexampleArgs) -> Result<Artifacts, CliError> {
    let mc = cfg.mc(20_000, 200);
    let report = counterexample_demo(cfg.horizon, &cfg.eps_schedule, &mc)?;
    let rows: Vec<Vec<f64>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.eps, r.bound, r.estimate, r.se, r.ratio, r.naive, r.naive_se,
            ]
        })
        .collect();
    let summary = Summary::new(
        "counterexample",
        params(cfg, a),
        json!({ "report": report }),
    )
    .verdict("bound_slope", (report.bound_slope + 0.4).abs() <= 0.02)
    .verdict(
        "estimate_slope",
        (report.estimate_slope + 0.4).abs() <= 0.02,
    )
    .verdict("ratio", report.rows.iter().all(|r| r.ratio >= 0.95));
    let headline = format!(
        "counterexample: slope {:.4} (bound {:.4}), ratios {:?}",
        report.estimate_slope,
        report.bound_slope,
        report
            .rows
            .iter()
            .map(|r| format!("{:.3}", r.ratio))
            .collect::<Vec<_>>()
    );
    Ok(Artifacts::new(summary, headline).table(
        "counterexample.csv",
        table(
            &[
                "eps", "bound", "estimate", "se", "ratio", "naive", "naive_se",
            ],
            &rows,
        ),
    ))
}

#[derive(Debug, Args, Serialize)]
pub struct StabilityArgs {
    /// Preset of the comparison driver
    #[arg(long)]
    pub second_preset: Option<String>,
    /// Parameter of the comparison driver as key=value; repeatable
    #[arg(long = "second-param", value_parser = crate::config::parse_param, allow_hyphen_values = true)]
    pub second_params: Vec<(String, f64)>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub refinements: Option<usize>,
}

fn stability(cfg: &RunConfig, a: &StabilityArgs) -> Result<Artifacts, CliError> {
    let (name, params_first) = cfg.driver_choice(("smooth-bump", &[]));
    let second_name = pick(&a.second_preset, &cfg.schedule.second_preset, name.clone());
    let mut second_params = if a.second_preset.is_none() && cfg.schedule.second_preset.is_none() {
        params_first.clone()
    } else {
        Default::default()
    };
    if let Some(p) = &cfg.schedule.second_params {
        second_params.extend(p.clone());
    }
    second_params.extend(a.second_params.iter().cloned());
    if second_name == name && second_params == params_first {
        let amp = params_first.get("amp").copied().unwrap_or(1.0);
        second_params.insert("amp".into(), 1.1 * amp);
    }
    let (g, grid) = (cfg.generator()?, cfg.grid()?);
    let first_driver = preset_driver(&name, &params_first)?;
    let second_driver = preset_driver(&second_name, &second_params)?;
    let form = cfg.form(None, &first_driver)?;
    let first = BsdeProblem::new(first_driver, g, grid, form)?;
    let second = BsdeProblem::new(second_driver, g, grid, form)?;
    let p = pick(&a.p, &cfg.schedule.p, 2.0);
    let report = stability_check(
        &first,
        &second,
        p,
        pick(&a.refinements, &cfg.schedule.refinements, 3),
    )?;
    let rows: Vec<Vec<f64>> = report
        .levels
        .iter()
        .map(|l| vec![l.nx as f64, l.sup_delta, l.fitted_c])
        .collect();
    let summary = Summary::new(
        "stability",
        params(cfg, a),
        json!({ "first": name, "second": second_name, "second_params": second_params, "report": report }),
    )
    .verdict("stable", report.stable);
    let headline = format!(
        "stability: fitted C {:?} (stable: {})",
        report
            .levels
            .iter()
            .map(|l| format!("{:.4}", l.fitted_c))
            .collect::<Vec<_>>(),
        report.stable
    );
    Ok(Artifacts::new(summary, headline).table(
        "stability.csv",
        table(&["nx", "sup_delta", "fitted_c"], &rows),
    ))
}
