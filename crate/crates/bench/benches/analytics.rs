use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dlf_core::analytics::{expected_gain, variance_gain};
use dlf_core::optimizer::{build_curve, solve_optimal_gain};

fn closed_form(c: &mut Criterion) {
    let mut g = c.benchmark_group("closed_form");
    for stage in [10usize, 90, 500] {
        g.bench_function(format!("variance_k{stage}"), |b| {
            b.iter(|| variance_gain(0.5, black_box(0.4), stage, -0.1, 0.0225, 1.0).unwrap())
        });
    }
    g.bench_function("mean_k90", |b| {
        b.iter(|| expected_gain(0.5, black_box(0.4), 90, -0.1, 1.0).unwrap())
    });
    g.finish();
}

fn optimizer(c: &mut Criterion) {
    c.bench_function("solve_optimal_gain_k90", |b| {
        b.iter(|| solve_optimal_gain(-0.1, 0.0225, 1.0, black_box(90), 1.0, 0.3, 1e-9).unwrap())
    });
    c.bench_function("build_curve_k90_200pts", |b| {
        b.iter(|| build_curve(-0.1, 0.0225, 1.0, black_box(90), 1.0, 200).unwrap())
    });
}

criterion_group!(benches, closed_form, optimizer);
criterion_main!(benches);
