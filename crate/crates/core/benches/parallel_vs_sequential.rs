use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use glab::exec::Execution;
use glab::gbsde::{solve_gbsde, BsdeProblem};
use glab::gcore::{preset_driver, CylinderFunctional, GFunction1D, Grid1D, Params};
use glab::gexpect::{default_stage_grids, gexpect_cylinder};
use glab::pde::PdeForm;
use glab::scenario::{estimate_dx, McSpec};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn g01() -> GFunction1D {
    GFunction1D::new(0.0, 1.0).unwrap()
}

fn sensitivity(c: &mut Criterion) {
    let problem = BsdeProblem::new(
        preset_driver("kinked", &Params::new()).unwrap(),
        g01(),
        Grid1D::centered(0.0, 1.0, 1.0, 2.0, 101).unwrap(),
        PdeForm::MarkovianFbsde,
    )
    .unwrap();
    let sol = problem.solve_direct().unwrap();
    let mut group = c.benchmark_group("sensitivity_x");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mc = McSpec::new(2000, 100, 5).with_exec(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_dx(&problem.driver, 0.0, black_box(0.3), &g01(), &sol, &mc).unwrap())
        });
    }
    group.finish();
}

fn eps_family(c: &mut Criterion) {
    let problem = BsdeProblem::new(
        preset_driver("sine-gz", &Params::new()).unwrap(),
        g01(),
        Grid1D::centered(0.0, 1.0, 1.0, 2.0, 201).unwrap(),
        PdeForm::RegularizedBsde,
    )
    .unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let mut group = c.benchmark_group("eps_family");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_gbsde(&problem, black_box(&eps), exec).unwrap())
        });
    }
    group.finish();
}

fn cylinder(c: &mut Criterion) {
    let psi =
        CylinderFunctional::new(vec![0.5, 1.0], |v| (v[0] - v[1]).abs() + v[0].cos()).unwrap();
    let grids = default_stage_grids(&psi, &g01(), 1.5, 81).unwrap();
    let mut group = c.benchmark_group("cylinder_recursion");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gexpect_cylinder(black_box(&psi), &g01(), &grids, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sensitivity, eps_family, cylinder);
criterion_main!(benches);
