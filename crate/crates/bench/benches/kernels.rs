use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use std::hint::black_box;

use ofbmlab::linop::expm;
use ofbmlab::verify::{shipped_model, shipped_spec, skew_spec};
use ofbmlab::{covariance, QuadConfig, SynthesisPlan};

fn bench_expm(c: &mut Criterion) {
    let a = DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.0, -0.1, 0.7, 0.3, 0.0, 0.1, 0.8]) * 3.0;
    c.bench_function("expm_3x3", |b| b.iter(|| expm(black_box(&a))));
}

fn bench_synthesis(c: &mut Criterion) {
    let model = shipped_model();
    let mut group = c.benchmark_group("circulant_sample");
    for n in [1024usize, 4096, 16384] {
        let plan = SynthesisPlan::new(&model, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &plan, |b, plan| {
            let mut i = 0;
            b.iter(|| {
                i += 1;
                plan.sample_replicate(1, i)
            })
        });
    }
    group.finish();
    c.bench_function("circulant_plan_4096", |b| {
        b.iter(|| SynthesisPlan::new(&model, black_box(4096)).unwrap())
    });
}

fn bench_covariance(c: &mut Criterion) {
    let quad = QuadConfig::default();
    let reversible = shipped_spec();
    let skew = skew_spec();
    c.bench_function("covariance_reversible", |b| {
        b.iter(|| covariance(&reversible, 0.3, black_box(0.9), &quad).unwrap())
    });
    c.bench_function("covariance_skew", |b| {
        b.iter(|| covariance(&skew, 0.3, black_box(0.9), &quad).unwrap())
    });
}

criterion_group!(benches, bench_expm, bench_synthesis, bench_covariance);
criterion_main!(benches);
