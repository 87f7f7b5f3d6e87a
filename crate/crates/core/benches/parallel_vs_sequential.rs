use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use talf_core::colgen::ColgenOptions;
use talf_core::harness::{self, DatasetSpec};
use talf_core::talf::{init_params, train_epoch, TalfConfig, TrainCase, TrainOptions};
use talf_core::{ExecMode, Family};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn teacher(c: &mut Criterion) {
    let spec = DatasetSpec::new(Family::RandomGeometric, 16, 32, 7);
    let (insts, _) = harness::generate_instances(&spec, ExecMode::Sequential).unwrap();
    let opts = ColgenOptions::default();
    let mut g = c.benchmark_group("label_32_instances");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(harness::label_instances(&insts, &opts, mode)))
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let spec = DatasetSpec::new(Family::RandomGeometric, 16, 64, 7);
    let (recs, _) = harness::generate_dataset(&spec, &ColgenOptions::default(), ExecMode::Parallel).unwrap();
    let cfg = TalfConfig::with_dims(16, 3);
    let cases: Vec<TrainCase> = recs.iter().map(|r| TrainCase::from_record(r, &cfg, true).unwrap()).collect();
    let store = init_params(&cfg, 1).unwrap();
    let mut g = c.benchmark_group("train_epoch_64_cases");
    g.sample_size(10);
    for (name, mode) in MODES {
        let opts = TrainOptions { batch_size: 16, mode, ..TrainOptions::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut s = store.clone();
                black_box(train_epoch(&mut s, &cfg, &cases, &opts, 3).unwrap())
            })
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let spec = DatasetSpec::new(Family::RandomGeometric, 16, 32, 8);
    let (recs, _) = harness::generate_dataset(&spec, &ColgenOptions::default(), ExecMode::Parallel).unwrap();
    let cfg = TalfConfig::with_dims(16, 3);
    let store = init_params(&cfg, 1).unwrap();
    let opts = ColgenOptions::default();
    let cases = harness::score_with_model(&store, &cfg, &recs, ExecMode::Parallel).unwrap();
    let refs = harness::references(&cases, &opts, ExecMode::Parallel).unwrap();
    let mut g = c.benchmark_group("evaluate_32_cases");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(harness::evaluate_scored(&cases, &refs, 0.5, &opts, mode).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, teacher, training, evaluation);
criterion_main!(benches);
