use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ddfdi_bench::{fixture, shapes};
use ddfdi_core::fdi_runtime::{monitor, MonitorConfig};
use ddfdi_core::{check_dd_solvability, check_strong_star_reconstructability, run_algorithm_one, synthesize_uio, Tolerance};
use std::hint::black_box;

fn design(c: &mut Criterion) {
    let tol = Tolerance::default();
    let mut group = c.benchmark_group("design");
    for (name, dims) in shapes() {
        let fx = fixture(dims, 7);
        group.bench_with_input(BenchmarkId::new("check_dd_solvability", name), &fx, |b, fx| {
            b.iter(|| check_dd_solvability(black_box(&fx.data), &tol))
        });
        group.bench_with_input(BenchmarkId::new("run_algorithm_one", name), &fx, |b, fx| {
            b.iter(|| run_algorithm_one(black_box(&fx.data), &tol).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("model_check", name), &fx, |b, fx| {
            b.iter(|| check_strong_star_reconstructability(black_box(&fx.sys), &tol))
        });
        group.bench_with_input(BenchmarkId::new("synthesize_uio", name), &fx, |b, fx| {
            b.iter(|| synthesize_uio(black_box(&fx.sys), &tol).unwrap())
        });
    }
    group.finish();
}

fn runtime(c: &mut Criterion) {
    let tol = Tolerance::default();
    let mut group = c.benchmark_group("monitor");
    for (name, dims) in shapes() {
        let fx = fixture(dims, 7);
        let cfg = MonitorConfig { k_id: dims.n, window: 3, ..MonitorConfig::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &fx, |b, fx| {
            b.iter(|| monitor(&fx.uio, black_box(&fx.residuals), &cfg, &tol).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, design, runtime);
criterion_main!(benches);
