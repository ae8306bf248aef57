use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hardening_bench::Fixture;
use hardening_core::em_solver::em_step;
use hardening_core::heat_solver::heat_step;
use hardening_core::phase_solver::phase_step;
use hardening_core::stepper::coupled_step;

const SIZES: [usize; 2] = [32, 64];

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(20);
    for n in SIZES {
        let f = Fixture::battery(n, 40).expect("fixture");
        let (p, s, dt) = (&f.problem, &f.state, f.dt());
        let t_new = s.t + dt;

        group.bench_with_input(BenchmarkId::new("em_step", n), &n, |b, _| {
            b.iter(|| em_step(&p.grid, &p.laws, &p.solver.em, &p.source, &s.a, &s.theta, &s.z, t_new, dt).unwrap())
        });

        let (a_new, _) = em_step(&p.grid, &p.laws, &p.solver.em, &p.source, &s.a, &s.theta, &s.z, t_new, dt).unwrap();
        group.bench_with_input(BenchmarkId::new("heat_step", n), &n, |b, _| {
            b.iter(|| {
                heat_step(&p.grid, &p.laws, &p.solver.heat, &s.e, &f.theta_lag, &s.z, &a_new, &s.a, dt, None).unwrap()
            })
        });

        group.bench_with_input(BenchmarkId::new("phase_step", n), &n, |b, _| {
            b.iter(|| phase_step(&p.grid, &p.laws, &p.solver.phase, &s.z, &s.theta, dt).unwrap())
        });

        group.bench_with_input(BenchmarkId::new("coupled_step", n), &n, |b, _| {
            b.iter(|| coupled_step(p, s, dt).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solvers);
criterion_main!(benches);
