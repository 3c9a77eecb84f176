//! Hot-path microbenchmarks: one training iteration, the NT-Xent loss, the
//! augmentation pipelines, and the optimizer step.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use con2da_bench::{bench_dataset, bench_train_config};
use con2da_core::augment::{make_pair, strong_transform, weak_transform, AugmentPolicy};
use con2da_core::losses::{ntxent_loss, NtxentDenominator};
use con2da_core::model::init_model;
use con2da_core::optim::{adam_step, AdamState};
use con2da_core::tape::Tape;
use con2da_core::tensor::Tensor;
use con2da_core::trainer::train_iteration;

fn bench_train_iteration(c: &mut Criterion) {
    let dataset = bench_dataset(1);
    let cfg = bench_train_config(1);
    let batch = cfg.resolve_batch(dataset.target_labeled().len());
    let mut model = init_model(cfg.seed, &cfg.dims).expect("valid dims");
    model.classifier.temperature = cfg.temperature;
    let mut opt = AdamState::with_betas(&model.parameters(), cfg.beta1, cfg.beta2);
    let labeled: Vec<_> = dataset.labeled_batches(&batch, 0).unwrap().next().unwrap();
    let unlabeled: Vec<_> = dataset.unlabeled_batches(&batch, 0).unwrap().next().unwrap();

    c.bench_function("train_iteration_full", |b| {
        let mut t = 0u64;
        b.iter(|| {
            let rec = train_iteration(&mut model, &mut opt, &labeled, &unlabeled, &cfg, t % 5000)
                .expect("iteration runs");
            t += 1;
            black_box(rec.l_sup)
        })
    });
}

fn bench_ntxent(c: &mut Criterion) {
    let n = 32;
    let d = 32;
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n * d {
        values.push(((i * 2654435761 + 12345) % 1000) as f64 / 500.0 - 1.0);
    }
    let raw = Tensor::new(vec![n, d], values).unwrap();

    c.bench_function("ntxent_n32", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let v = tape.constant(&raw);
            let zw = tape.l2_normalize_rows(v).unwrap();
            let zs = tape.l2_normalize_rows(v).unwrap();
            let loss = ntxent_loss(&mut tape, zw, zs, 0.05, NtxentDenominator::Paper).unwrap();
            black_box(tape.value(loss)[0])
        })
    });
}

fn bench_augment(c: &mut Criterion) {
    let dataset = bench_dataset(2);
    let sample = dataset.source_labeled()[0].clone();
    let policy = AugmentPolicy::default();

    c.bench_function("weak_transform", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(weak_transform(&sample, &policy, seed))
        })
    });
    c.bench_function("strong_transform", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(strong_transform(&sample, &policy, seed))
        })
    });
    c.bench_function("make_pair", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            black_box(make_pair(&sample, &policy, seed))
        })
    });
}

fn bench_adam(c: &mut Criterion) {
    let mut param = Tensor::param(vec![64, 768], vec![0.01; 64 * 768]).unwrap();
    param.accumulate_grad(&vec![1e-3; 64 * 768]).unwrap();
    let mut state = AdamState::new(&[&param]);

    c.bench_function("adam_step_49k_params", |b| {
        b.iter(|| {
            adam_step(&mut [&mut param], &mut state, 8e-5).unwrap();
            black_box(param.values()[0])
        })
    });
}

criterion_group!(
    benches,
    bench_train_iteration,
    bench_ntxent,
    bench_augment,
    bench_adam
);
criterion_main!(benches);
