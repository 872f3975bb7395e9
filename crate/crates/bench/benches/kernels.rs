use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ciae_bench::fixture;
use ciae_core::autoencoder::{batch_objective, build_architecture, Reconstruction};
use ciae_core::complexity::{n3_loo_1nn, pcccd_cover, Distance};
use ciae_core::eval::classifiers::{lssvm_fit, Kernel};
use ciae_core::network::{self, LinearHead};
use ciae_core::penalties::{scorer_penalty, skaler_penalty, slicer_penalty, PenaltyKind, PenaltySpec};
use ndarray::{s, Array1};

fn training_step(c: &mut Criterion) {
    let (data, x) = fixture(400, 18);
    let batch = x.slice(s![..32, ..]);
    let labels = &data.labels()[..32];
    let mut group = c.benchmark_group("batch_objective");
    for kind in [PenaltyKind::None, PenaltyKind::Scorer, PenaltyKind::Skaler, PenaltyKind::Slicer] {
        let arch = build_architecture(20, 400, kind, Reconstruction::CrossEntropy);
        let head = (kind == PenaltyKind::Slicer).then_some(arch.encoding_dim());
        let params = network::init_params(&arch.specs, 3, head).unwrap();
        let penalty = PenaltySpec::default_for(kind);
        group.bench_function(kind.as_str(), |b| {
            b.iter(|| batch_objective(&params, &arch, &penalty, Reconstruction::CrossEntropy, batch, labels).unwrap())
        });
    }
    group.finish();
}

fn penalties(c: &mut Criterion) {
    let (data, x) = fixture(32, 2);
    let z = x.slice(s![.., ..4]);
    let labels = data.labels();
    let head = LinearHead { w: Array1::from_elem(4, 0.1), b: 0.0 };
    c.bench_function("penalty/scorer", |b| b.iter(|| scorer_penalty(black_box(z), labels).unwrap()));
    c.bench_function("penalty/skaler", |b| b.iter(|| skaler_penalty(black_box(z), labels, 1.0).unwrap()));
    c.bench_function("penalty/slicer", |b| b.iter(|| slicer_penalty(black_box(z), labels, &head, 1.0).unwrap()));
}

fn complexity(c: &mut Criterion) {
    let mut group = c.benchmark_group("complexity");
    for n in [100, 400] {
        let (data, _) = fixture(n, 3);
        group.bench_with_input(BenchmarkId::new("pcccd", n), &data, |b, d| b.iter(|| pcccd_cover(d, Distance::Euclidean)));
        group.bench_with_input(BenchmarkId::new("n3", n), &data, |b, d| b.iter(|| n3_loo_1nn(d, Distance::Euclidean)));
    }
    group.finish();
}

fn lssvm(c: &mut Criterion) {
    let mut group = c.benchmark_group("lssvm_fit");
    group.sample_size(20);
    for n in [100, 320] {
        let (data, x) = fixture(n, 3);
        group.bench_with_input(BenchmarkId::new("rbf", n), &n, |b, _| {
            b.iter(|| lssvm_fit(x.view(), data.labels(), 1.0, Kernel::Rbf { width: 1.0 }).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, training_step, penalties, complexity, lssvm);
criterion_main!(benches);
