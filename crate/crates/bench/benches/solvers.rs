use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fiberspin::analysis::{existence_criterion, q0_bounds};
use fiberspin::banded::BandMatrix;
use fiberspin::bvp::{continuation_solve, integrate_inviscid, ContinuationOptions};
use fiberspin::ivp::IvpConfig;
use fiberspin::sweep::solve_point;
use fiberspin::SpinParams;

fn params(delta: f64, epsilon: f64, kappa: f64) -> SpinParams {
    SpinParams::new(delta, epsilon, kappa, 1.0).unwrap()
}

fn banded(c: &mut Criterion) {
    let mut group = c.benchmark_group("band_lu");
    for n in [256usize, 1024, 4096] {
        let (kl, ku) = (7, 7);
        let mut a = BandMatrix::zeros(n, kl, ku);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                let v = if i == j { 20.0 } else { 1.0 / (1.0 + (i + 2 * j) as f64 % 7.0) };
                a.set(i, j, v);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let lu = a.clone().factorize().unwrap();
                let mut x = b.clone();
                lu.solve_in_place(&mut x);
                black_box(x)
            })
        });
    }
    group.finish();
}

fn inviscid(c: &mut Criterion) {
    let p = params(0.1, 0.25, 0.1);
    let cfg = IvpConfig::default();
    c.bench_function("inviscid_ivp", |b| {
        b.iter(|| integrate_inviscid(black_box(&p), &cfg).unwrap())
    });
}

fn viscous(c: &mut Criterion) {
    let mut group = c.benchmark_group("viscous_bvp");
    group.sample_size(10);
    let opts = ContinuationOptions::default();
    for (name, p) in [
        ("direct", params(0.01, 0.1, 0.3)),
        ("continued", params(0.133, 0.25, 0.1)),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| continuation_solve(black_box(&p), &opts).unwrap())
        });
    }
    group.bench_function("sweep_point", |b| {
        let p = params(0.1, 0.25, 0.1);
        b.iter(|| solve_point(black_box(&p), 1e-8))
    });
    group.finish();
}

fn closed_forms(c: &mut Criterion) {
    let p = params(0.133, 0.25, 0.1);
    c.bench_function("q0_bounds", |b| b.iter(|| q0_bounds(black_box(&p))));
    c.bench_function("existence_criterion", |b| {
        b.iter(|| existence_criterion(black_box(&p)))
    });
}

criterion_group!(benches, banded, inviscid, viscous, closed_forms);
criterion_main!(benches);
