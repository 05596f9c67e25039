use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpns::assembly::{assemble_matrix_darcy_step, assemble_ns_step};
use dpns::linalg::LinearSolver;
use dpns::stepper::{Stepper, StepperOptions, TimeGrid};
use dpns_bench::Fixture;

const SIZES: [usize; 2] = [8, 16];

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for n in SIZES {
        let f = Fixture::new(n);
        let dt = f.dt(n);
        let s = &f.state;
        g.bench_with_input(BenchmarkId::new("conduit", n), &n, |b, _| {
            b.iter(|| assemble_ns_step(&f.spaces, &s.u_c, &s.phi_f, &s.u_f, dt, dt, &f.problem).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("matrix_darcy", n), &n, |b, _| {
            b.iter(|| assemble_matrix_darcy_step(&f.spaces, &s.phi_m, &s.phi_f, dt, dt, &f.problem).unwrap())
        });
    }
    g.finish();
}

fn solve(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    for n in SIZES {
        let f = Fixture::new(n);
        let dt = f.dt(n);
        let s = &f.state;
        let ns = assemble_ns_step(&f.spaces, &s.u_c, &s.phi_f, &s.u_f, dt, dt, &f.problem).unwrap();
        let darcy = assemble_matrix_darcy_step(&f.spaces, &s.phi_m, &s.phi_f, dt, dt, &f.problem).unwrap();
        let mut solver = LinearSolver::new();
        g.bench_with_input(BenchmarkId::new("conduit_lu", n), &n, |b, _| b.iter(|| solver.solve(&ns.matrix, &ns.rhs).unwrap()));
        let kept = solver.factorize(&ns.matrix).unwrap();
        g.bench_with_input(BenchmarkId::new("conduit_back_substitution", n), &n, |b, _| {
            b.iter(|| kept.solve_checked(&ns.matrix, &ns.rhs).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("darcy_lu", n), &n, |b, _| {
            b.iter(|| solver.solve(&darcy.matrix, &darcy.rhs).unwrap())
        });
    }
    g.finish();
}

fn macro_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("macro_step");
    g.sample_size(10);
    for r in [1, 4] {
        let n = 16;
        let f = Fixture::new(n);
        let grid = TimeGrid::new(0.5, 256 / r, r).unwrap();
        g.bench_with_input(BenchmarkId::new("h16_r", r), &r, |b, _| {
            b.iter_batched(
                || f.state.clone(),
                |mut st| {
                    let mut stepper = Stepper::new(&f.spaces, &f.problem, grid, StepperOptions::default()).unwrap();
                    stepper.advance_macro_step(&mut st).unwrap();
                    st
                },
                criterion::BatchSize::LargeInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, assembly, solve, macro_step);
criterion_main!(benches);
