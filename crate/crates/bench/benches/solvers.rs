use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use riccati_core::fmap::IntervalKernel;
use riccati_core::matfun::expm;
use riccati_core::oracle::{build_discrete, qp_minimal_cost};
use riccati_core::{
    benchmark, make_partition, solve_pare, solve_pdre, solve_sdare, solve_sddre, Horizon, PartitionSpec,
    Tolerances, Vector,
};

fn kernels(c: &mut Criterion) {
    let tol = Tolerances::default();
    let p = benchmark("random3").unwrap().to_problem().unwrap();
    let (a, _, _, _) = p.constant().unwrap();
    c.bench_function("expm 3x3", |b| b.iter(|| expm(black_box(a), 0.1).unwrap()));
    c.bench_function("interval kernel 3x3", |b| {
        b.iter(|| IntervalKernel::new(&p, 0.0, black_box(0.1), &tol).unwrap())
    });
}

fn solvers(c: &mut Criterion) {
    let tol = Tolerances::default();
    let di = benchmark("double-integrator").unwrap().to_problem().unwrap();
    let finite = di.clone().with_horizon(Horizon::Finite(2.0)).unwrap();
    let part = make_partition(2.0, &PartitionSpec::Uniform(0.02)).unwrap();
    c.bench_function("P-ARE double integrator", |b| b.iter(|| solve_pare(black_box(&di), &tol).unwrap()));
    c.bench_function("SD-ARE double integrator h=0.1", |b| {
        b.iter(|| solve_sdare(black_box(&di), 0.1, &tol).unwrap())
    });
    c.bench_function("P-DRE double integrator T=2", |b| {
        b.iter(|| solve_pdre(black_box(&finite), 0.02, &tol).unwrap())
    });
    c.bench_function("SD-DRE double integrator 100 steps", |b| {
        b.iter(|| solve_sddre(black_box(&finite), &part, &tol).unwrap())
    });
    let data = build_discrete(&finite, &part, &tol).unwrap();
    let x0 = Vector::from_element(2, 1.0);
    c.bench_function("dense QP oracle 100 steps", |b| {
        b.iter(|| qp_minimal_cost(black_box(&data), &x0).unwrap())
    });
}

criterion_group!(benches, kernels, solvers);
criterion_main!(benches);
