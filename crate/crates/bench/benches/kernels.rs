use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use pmelab_bench::parabola;
use pmelab_core::field::pressure_from_density;
use pmelab_core::freeboundary::{default_threshold, extract_boundary};
use pmelab_core::solver::{cfl_dt, flux_divergence, step, Discretization, FluxScheme, SolverConfig, SolverState};
use pmelab_core::Potential;

fn bench_flux(c: &mut Criterion) {
    let phi = Potential::quadratic();
    let mut group = c.benchmark_group("flux_divergence");
    for (d, n) in [(1, 4000), (2, 200)] {
        let rho = parabola(d, n);
        group.bench_with_input(BenchmarkId::new(format!("{d}d"), n), &rho, |b, rho| {
            b.iter(|| flux_divergence(black_box(rho), &phi, 2.0).unwrap())
        });
    }
    group.finish();
}

fn bench_step(c: &mut Criterion) {
    let phi = Potential::quadratic();
    let cfg = SolverConfig::new(2.0, 1.0, 0.1);
    let mut group = c.benchmark_group("step");
    for scheme in [FluxScheme::WellBalanced, FluxScheme::Split] {
        let rho = parabola(2, 200);
        let disc = Discretization::new(rho.grid(), &phi, scheme).unwrap();
        let dt = cfl_dt(&rho, &phi, 2.0, cfg.cfl_factor).unwrap();
        let state = SolverState::new(rho, 0.0).unwrap();
        group.bench_function(format!("{scheme:?}/2d/200"), |b| {
            b.iter_batched(|| state.clone(), |mut s| step(&mut s, dt, &disc, &cfg).unwrap(), criterion::BatchSize::LargeInput)
        });
    }
    group.finish();
}

fn bench_boundary(c: &mut Criterion) {
    let mut group = c.benchmark_group("extract_boundary");
    for (d, n) in [(1, 4000), (2, 200)] {
        let u = pressure_from_density(&parabola(d, n), 2.0).unwrap();
        let eps = default_threshold(&u);
        group.bench_with_input(BenchmarkId::new(format!("{d}d"), n), &u, |b, u| {
            b.iter(|| extract_boundary(black_box(u), eps, 0.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_flux, bench_step, bench_boundary);
criterion_main!(benches);
