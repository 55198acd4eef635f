//! Parallel-vs-sequential benchmarks for the data-parallel hot paths: batch
//! gradient computation, spatial attention over a batch, and multi-channel
//! FIR filtering. The `parallel` (default) feature routes the first variant
//! through rayon; the `*_seq` helpers are the always-available fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eegmix_core::attention::{score_table, DropRegion};
use eegmix_core::datagen::preproc::fir_bandpass_default;
use eegmix_core::nn::softmax_cross_entropy;
use eegmix_core::par;
use eegmix_core::rvgg::{build_rvgg, Mode, Model, ModelSpec};
use eegmix_core::tensor::Tensor;
use eegmix_core::{datagen, rng};
use rand::Rng;
use std::sync::Arc;

const BATCH: usize = 16;
const TIME: usize = 256;

fn batch(montage_channels: usize) -> (Model, Vec<Tensor>, Vec<u8>, Arc<eegmix_core::attention::ScoreTable>) {
    let spec = ModelSpec::with_attention(16, 32, TIME, 4);
    let model = build_rvgg(&spec, 7).unwrap();
    let montage = datagen::synth_montage(montage_channels, 1).unwrap();
    let table = Arc::new(
        score_table(model.attention.as_ref().unwrap(), montage.layout2d()).unwrap(),
    );
    let mut r = rng::stream(3, "bench-data", &[]);
    let xs: Vec<Tensor> = (0..BATCH)
        .map(|_| {
            Tensor::from_vec(
                &[montage_channels, TIME],
                (0..montage_channels * TIME)
                    .map(|_| r.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let labels: Vec<u8> = (0..BATCH).map(|i| (i % 2) as u8).collect();
    (model, xs, labels, table)
}

fn grad_one(
    model: &Model,
    x: &Tensor,
    label: u8,
    table: &Arc<eegmix_core::attention::ScoreTable>,
) -> f64 {
    let mut rng = rng::stream(0, "bench-dropout", &[]);
    let (logits, cache) = model
        .forward_sample(x, Some(table), &[DropRegion::disabled()], Mode::Train, &mut rng)
        .unwrap();
    let (loss, dlogits) = softmax_cross_entropy(&logits, label as usize).unwrap();
    let grads = model.backward_sample(&cache, &dlogits, Mode::Train).unwrap();
    loss + grads.tensors[0].data()[0]
}

fn bench_batch_gradients(c: &mut Criterion) {
    let (model, xs, labels, table) = batch(32);
    let mut group = c.benchmark_group("batch_gradients");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", BATCH), |b| {
        b.iter(|| {
            let losses = par::map_indexed(xs.len(), |i| {
                grad_one(&model, &xs[i], labels[i], &table)
            });
            losses.iter().sum::<f64>()
        })
    });
    group.bench_function(BenchmarkId::new("sequential", BATCH), |b| {
        b.iter(|| {
            let losses = par::map_indexed_seq(xs.len(), |i| {
                grad_one(&model, &xs[i], labels[i], &table)
            });
            losses.iter().sum::<f64>()
        })
    });
    group.finish();
}

fn bench_attention_forward(c: &mut Criterion) {
    let (model, xs, _, table) = batch(32);
    let params = model.attention.as_ref().unwrap();
    let mut group = c.benchmark_group("attention_forward");
    group.sample_size(20);
    group.bench_function(BenchmarkId::new("parallel", BATCH), |b| {
        b.iter(|| {
            let ys = par::map_indexed(xs.len(), |i| {
                eegmix_core::attention::forward_with_table(
                    params,
                    &table,
                    &xs[i],
                    &[DropRegion::disabled()],
                )
                .unwrap()
                .0
            });
            ys.len()
        })
    });
    group.bench_function(BenchmarkId::new("sequential", BATCH), |b| {
        b.iter(|| {
            let ys = par::map_indexed_seq(xs.len(), |i| {
                eegmix_core::attention::forward_with_table(
                    params,
                    &table,
                    &xs[i],
                    &[DropRegion::disabled()],
                )
                .unwrap()
                .0
            });
            ys.len()
        })
    });
    group.finish();
}

fn bench_fir_channels(c: &mut Criterion) {
    let channels = 8usize;
    let len = 4096usize;
    let mut r = rng::stream(5, "bench-fir", &[]);
    let rows: Vec<Vec<f64>> = (0..channels)
        .map(|_| (0..len).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut group = c.benchmark_group("fir_bandpass_128hz");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", channels), |b| {
        b.iter(|| {
            let out = par::map_slice(&rows, |row| fir_bandpass_default(row, 128.0).unwrap());
            out.len()
        })
    });
    group.bench_function(BenchmarkId::new("sequential", channels), |b| {
        b.iter(|| {
            let out = par::map_slice_seq(&rows, |row| fir_bandpass_default(row, 128.0).unwrap());
            out.len()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_batch_gradients,
    bench_attention_forward,
    bench_fir_channels
);
criterion_main!(benches);
