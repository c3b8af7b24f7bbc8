use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rmtmean::{grad_f_rmt, rmt_dist2, rmt_mean, sym_eig, DescentConfig, MeanInit, SymMatrix};
use rmtmean_bench::Fixture;
use std::hint::black_box;

const DIMS: [usize; 3] = [8, 16, 64];

fn eig(c: &mut Criterion) {
    let mut group = c.benchmark_group("sym_eig");
    for p in DIMS {
        let f = Fixture::new(p, 2 * p, 1, 1);
        let m = SymMatrix::new(f.scms[0].as_matrix().clone()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(p), &m, |b, m| b.iter(|| sym_eig(black_box(m)).unwrap()));
    }
    group.finish();
}

fn distance(c: &mut Criterion) {
    let mut group = c.benchmark_group("rmt_dist2");
    for p in DIMS {
        let f = Fixture::new(p, 2 * p, 1, 2);
        group.bench_function(BenchmarkId::from_parameter(p), |b| {
            b.iter(|| rmt_dist2(black_box(&f.r), black_box(&f.scms[0]), f.n).unwrap())
        });
    }
    group.finish();
}

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_f_rmt");
    for p in DIMS {
        let f = Fixture::new(p, 2 * p, 1, 3);
        group.bench_function(BenchmarkId::from_parameter(p), |b| {
            b.iter(|| grad_f_rmt(black_box(&f.r), black_box(&f.scms[0]), f.n).unwrap())
        });
    }
    group.finish();
}

fn mean(c: &mut Criterion) {
    let mut group = c.benchmark_group("rmt_mean");
    group.sample_size(10);
    for (p, k) in [(8, 10), (16, 10), (16, 64)] {
        let f = Fixture::new(p, 2 * p, k, 4);
        group.bench_function(BenchmarkId::new(format!("p{p}"), k), |b| {
            b.iter(|| rmt_mean(black_box(&f.data), &MeanInit::Identity, &DescentConfig::for_mean()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, eig, distance, gradient, mean);
criterion_main!(benches);
