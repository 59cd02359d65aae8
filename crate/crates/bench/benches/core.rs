use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use treebound_bench::{fixture, hilbert};
use treebound_core::{evaluate_distortion, fork_constant, lower_bound_iterative, DEFAULT_TAU};

fn distortion(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_distortion");
    for depth in [4u32, 6, 8] {
        let e = fixture(depth, 2.0, 4);
        group.bench_with_input(BenchmarkId::from_parameter(depth), &e, |b, e| {
            b.iter(|| evaluate_distortion(black_box(e)).unwrap())
        });
    }
    group.finish();
}

fn fork(c: &mut Criterion) {
    let profile = hilbert();
    c.bench_function("fork_constant", |b| {
        b.iter(|| fork_constant(black_box(3.7), &profile, DEFAULT_TAU).unwrap())
    });
}

fn bound(c: &mut Criterion) {
    let profile = hilbert();
    let mut group = c.benchmark_group("lower_bound_iterative");
    for m in [10u32, 1000, 100_000] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| lower_bound_iterative(black_box(m), &profile, DEFAULT_TAU).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, distortion, fork, bound);
criterion_main!(benches);
