use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hawkes_bench::network_and_events;
use hawkes_core::likelihood::{build_piecewise_intensity, log_likelihood};

fn likelihood(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_likelihood");
    for horizon in [250.0, 1000.0, 4000.0] {
        let (f, events) = network_and_events(horizon);
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &horizon, |b, &t| {
            b.iter(|| log_likelihood(black_box(f.component(0)), 0, &events, t).unwrap())
        });
    }
    group.finish();
}

fn intensity_sweep(c: &mut Criterion) {
    let (f, events) = network_and_events(1000.0);
    c.bench_function("piecewise_intensity/1000", |b| {
        b.iter(|| build_piecewise_intensity(black_box(f.component(3)), 3, &events, 1000.0).unwrap())
    });
}

criterion_group!(benches, likelihood, intensity_sweep);
criterion_main!(benches);
