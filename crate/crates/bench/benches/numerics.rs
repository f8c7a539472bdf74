use std::hint::black_box;

use aciq_bench::{example, reference_problem, standard_table};
use aciq_core::gauge::{self, Units};
use aciq_core::moments::omega;
use aciq_core::spectral::{bessel_zeros, eigen_solve, spectrum_compare};
use aciq_core::weights::{localization_profile, LocalizationGrid};
use aciq_core::PlaneVector;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn moments(c: &mut Criterion) {
    let mut g = c.benchmark_group("omega");
    for nu in [1.0, 16.0, 64.0] {
        let w = example(nu, 3.5, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(nu), &w, |b, w| b.iter(|| omega(w, 0.0, 0, 0, PlaneVector::E1, 1e-10).unwrap()));
    }
    g.finish();

    let w = example(1.0, 3.5, 1.0);
    c.bench_function("moment_table/standard", |b| b.iter(|| standard_table(black_box(&w), 1e-10)));
    let t = standard_table(&w, 1e-10);
    c.bench_function("gauge_data", |b| b.iter(|| gauge::GaugeData::from_moments(black_box(&t), Units::default(), gauge::GAUGE_TOL).unwrap()));
}

fn spectral(c: &mut Criterion) {
    c.bench_function("bessel_zeros/order1.5/k10", |b| b.iter(|| bessel_zeros(black_box(1.5), 10).unwrap()));
    let mut g = c.benchmark_group("eigen_solve");
    g.sample_size(10);
    for n in [1000usize, 4000] {
        let rp = reference_problem(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &rp, |b, rp| b.iter(|| eigen_solve(rp, 3).unwrap()));
    }
    g.finish();
    let rp = reference_problem(4000);
    c.bench_function("spectrum_compare/4000", |b| b.iter(|| spectrum_compare(black_box(&rp), 3).unwrap()));
}

fn localization(c: &mut Criterion) {
    let w = example(64.0, 3.5, 0.0);
    c.bench_function("localization_profile/default", |b| b.iter(|| localization_profile(black_box(&w), LocalizationGrid::default()).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = moments, spectral, localization
}
criterion_main!(benches);
