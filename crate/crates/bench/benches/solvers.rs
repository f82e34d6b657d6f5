use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use normqp::activeset::ActiveSetOptions;
use normqp::sparsepca::{gamma_search, SpcaOptions};
use normqp::trs::solve_trs_with;
use normqp::{qpmode, TrsOptions};
use normqp_bench::{planted_data, qp_instance, trs_instance};

fn trs(c: &mut Criterion) {
    let mut group = c.benchmark_group("trs");
    for n in [10, 40, 200] {
        let prob = trs_instance(n, 7);
        group.bench_with_input(BenchmarkId::new("dense", n), &prob, |b, p| {
            let opts = TrsOptions {
                force_dense: true,
                ..Default::default()
            };
            b.iter(|| solve_trs_with(black_box(p), &opts).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("arnoldi", n), &prob, |b, p| {
            let opts = TrsOptions {
                force_arnoldi: true,
                ..Default::default()
            };
            b.iter(|| solve_trs_with(black_box(p), &opts).unwrap())
        });
    }
    group.finish();
}

fn active_set(c: &mut Criterion) {
    let mut group = c.benchmark_group("active_set");
    group.sample_size(20);
    let opts = ActiveSetOptions::default();
    for n in [10, 30, 60] {
        let (prob, x0) = qp_instance(n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(prob, x0), |b, (p, x0)| {
            b.iter(|| qpmode::solve(black_box(p), x0, &opts).unwrap())
        });
    }
    group.finish();
}

fn sparse_pca(c: &mut Criterion) {
    let mut group = c.benchmark_group("sparse_pca");
    group.sample_size(10);
    let d = planted_data(100, 200, 3);
    let opts = SpcaOptions::default();
    group.bench_function("gamma_search_100x200", |b| {
        b.iter(|| gamma_search(black_box(&d), 5, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, trs, active_set, sparse_pca);
criterion_main!(benches);
