//! Parallel against sequential execution of the three hot kernels.
//!
//! "sequential" pins the pool to one thread; building with
//! `--no-default-features` removes rayon altogether, which makes both
//! variants sequential.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msearch::par::with_threads;
use msearch::sampler::simulate_values;
use msearch::{convolve, exact_moments, tree_counts, MomentMode, Model, Series, SplitSampler, TollSpec};
use rug::Integer;

fn variants() -> [(&'static str, usize); 2] {
    [("sequential", 1), ("parallel", 0)]
}

fn bench_convolution(c: &mut Criterion) {
    let table = tree_counts(3, 2000).unwrap();
    let s: Series<Integer> = table.series((), 2001);
    let mut g = c.benchmark_group("convolution");
    g.sample_size(10);
    for (name, threads) in variants() {
        g.bench_with_input(BenchmarkId::new(name, 2000), &threads, |b, &t| {
            b.iter(|| with_threads(t, || convolve(&s, &s, 2000).unwrap()))
        });
    }
    g.finish();
}

fn bench_moments(c: &mut Criterion) {
    let n = 400;
    let table = tree_counts(3, n).unwrap();
    let toll = TollSpec::leaves(3).unwrap();
    let mut g = c.benchmark_group("moments");
    g.sample_size(10);
    for (name, threads) in variants() {
        g.bench_with_input(BenchmarkId::new(name, n), &threads, |b, &t| {
            b.iter(|| with_threads(t, || exact_moments(&toll, &table, 3, n, MomentMode::Exact).unwrap()))
        });
    }
    g.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let n = 500;
    let s = SplitSampler::new(Arc::new(tree_counts(2, n).unwrap()), 1, Model::Uniform);
    let tolls = [TollSpec::leaves(2).unwrap()];
    let mut g = c.benchmark_group("sampling");
    g.sample_size(10);
    for (name, threads) in variants() {
        g.bench_with_input(BenchmarkId::new(name, n), &threads, |b, &t| {
            b.iter(|| simulate_values(&s, n, &tolls, 2000, t).unwrap())
        });
    }
    g.finish();
}

criterion_group!(kernels, bench_convolution, bench_moments, bench_sampling);
criterion_main!(kernels);
