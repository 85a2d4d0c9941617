use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fdx_bench::{bench_level, oracle_lfdr, prefix_probabilities};
use fdx_core::{pbd_pmf, pbd_tail_gt, procedure1, procedure2, ProcedureOptions};

fn pbd(c: &mut Criterion) {
    let lfdr = oracle_lfdr(10_000, 1);
    let mut group = c.benchmark_group("pbd_tail_gt");
    for k in [100, 1000, 5000] {
        let p = prefix_probabilities(&lfdr, k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &p, |b, p| {
            b.iter(|| pbd_tail_gt(black_box(p), 0.1 * p.len() as f64).unwrap())
        });
    }
    group.finish();
    let p = prefix_probabilities(&lfdr, 1000);
    c.bench_function("pbd_pmf/1000", |b| {
        b.iter(|| pbd_pmf(black_box(&p)).unwrap())
    });
}

fn procedures(c: &mut Criterion) {
    let level = bench_level();
    let opts = ProcedureOptions::default();
    let mut group = c.benchmark_group("procedure2");
    for m in [1000, 10_000, 100_000] {
        let lfdr = oracle_lfdr(m, 2);
        group.bench_with_input(BenchmarkId::from_parameter(m), &lfdr, |b, lfdr| {
            b.iter(|| procedure2(black_box(lfdr), &level, &opts))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("procedure1");
    group.sample_size(10);
    for m in [1000, 10_000] {
        let lfdr = oracle_lfdr(m, 2);
        group.bench_with_input(BenchmarkId::from_parameter(m), &lfdr, |b, lfdr| {
            b.iter(|| procedure1(black_box(lfdr), &level, &opts))
        });
    }
    group.finish();
}

criterion_group!(benches, pbd, procedures);
criterion_main!(benches);
