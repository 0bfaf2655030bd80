use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use latent_change::detector::mdl_change_statistic;
use latent_change::nml::log_multinomial_complexity;
use latent_change::sbm::{infer_assignments, window_code_length};
use latent_change::stream::gen_abrupt;
use latent_change::{DetectorConfig, LogComplexityTable, WindowMode};

fn complexity(c: &mut Criterion) {
    let mut group = c.benchmark_group("complexity");
    for n in [100u64, 1_000, 10_000] {
        group.bench_with_input(BenchmarkId::new("direct", n), &n, |b, &n| {
            b.iter(|| log_multinomial_complexity(black_box(n), black_box(10)).unwrap())
        });
    }
    group.bench_function("table_k10", |b| b.iter(|| LogComplexityTable::new(black_box(10)).unwrap()));
    group.finish();
}

fn dnml(c: &mut Criterion) {
    let stream = gen_abrupt(100, 1).unwrap();
    let table = LogComplexityTable::new(10).unwrap();
    let window = &stream.snapshots[..4];
    let truth = &stream.truth[..4];
    c.bench_function("dnml_window_n100_h2", |b| {
        b.iter(|| window_code_length(black_box(window), truth, 3, &table, WindowMode::Pooled).unwrap())
    });
}

fn em(c: &mut Criterion) {
    let stream = gen_abrupt(100, 2).unwrap();
    let window = &stream.snapshots[..4];
    let mut group = c.benchmark_group("em");
    group.sample_size(20);
    for k in [2usize, 3, 6] {
        group.bench_with_input(BenchmarkId::new("fit", k), &k, |b, &k| {
            b.iter(|| infer_assignments(black_box(window), k, 1, 0).unwrap())
        });
    }
    group.finish();
}

fn window_statistic(c: &mut Criterion) {
    let stream = gen_abrupt(100, 3).unwrap();
    let table = LogComplexityTable::new(10).unwrap();
    let config = DetectorConfig { restarts: 2, ..DetectorConfig::default() };
    let mut group = c.benchmark_group("window_statistic");
    group.sample_size(10);
    group.bench_function("n100_h2", |b| {
        b.iter(|| {
            mdl_change_statistic(&stream.snapshots[56..58], &stream.snapshots[58..60], &config, 0, 58, &table).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, complexity, dnml, em, window_statistic);
criterion_main!(benches);
