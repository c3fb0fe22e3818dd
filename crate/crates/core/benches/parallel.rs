use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gderiv_core::par::Exec;
use gderiv_core::simulation::{sample_fbm, sample_fbm_volterra, Method, Sampling, TimeGrid};

fn samplers(c: &mut Criterion) {
    let mut group = c.benchmark_group("fbm");
    group.sample_size(10);
    let grid = TimeGrid::new(1024, 1.0).unwrap();
    for exec in [Exec::Sequential, Exec::Parallel] {
        let s = Sampling::new(1).exec(exec);
        group.bench_with_input(BenchmarkId::new("circulant", format!("{exec:?}")), &s, |b, s| {
            b.iter(|| sample_fbm(0.7, &grid, 2000, s, Method::Circulant).unwrap());
        });
    }
    let small = TimeGrid::new(128, 1.0).unwrap();
    for exec in [Exec::Sequential, Exec::Parallel] {
        let s = Sampling::new(1).exec(exec);
        group.bench_with_input(BenchmarkId::new("volterra", format!("{exec:?}")), &s, |b, s| {
            b.iter(|| sample_fbm_volterra(0.3, &small, 2000, s).unwrap());
        });
    }
    group.finish();
}

criterion_group!(benches, samplers);
criterion_main!(benches);
