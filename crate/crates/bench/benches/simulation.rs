use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hawkes_core::experiments::canonical_truth;
use hawkes_core::sim::{simulate_cluster, simulate_thinning};
use hawkes_core::Seed;

fn simulators(c: &mut Criterion) {
    let f = canonical_truth(10).unwrap().params;
    let mut group = c.benchmark_group("simulate_T500");
    group.sample_size(20);
    group.bench_function("cluster", |b| {
        b.iter(|| simulate_cluster(black_box(&f), 500.0, Seed::new(1, 0)).unwrap())
    });
    group.bench_function("thinning", |b| {
        b.iter(|| simulate_thinning(black_box(&f), 500.0, 20.0, Seed::new(1, 0)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, simulators);
criterion_main!(benches);
