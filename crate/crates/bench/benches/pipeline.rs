use std::hint::black_box;

use cplxbench_bench::mixtures;
use cplxbench_core::dsp::{istft, si_sdr, stft, Framing};
use cplxbench_core::train::{batch_loss, LossKind};
use cplxbench_core::zoo::{preset, Model};
use cplxbench_core::{Graph, ParamStore};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn stft_round_trip(c: &mut Criterion) {
    let x: Vec<f64> = (0..16000).map(|i| (i as f64 * 0.013).sin() + 0.1 * (i as f64 * 0.31).cos()).collect();
    let mut group = c.benchmark_group("stft_round_trip_1s");
    for framing in [Framing::W512_H128, Framing::W320_H160] {
        group.bench_function(BenchmarkId::from_parameter(framing.label()), |b| {
            b.iter(|| black_box(istft(&stft(&x, &framing).unwrap()).unwrap()))
        });
    }
    group.finish();
    c.bench_function("si_sdr_1s", |b| {
        let y: Vec<f64> = x.iter().map(|v| 0.9 * v + 0.01).collect();
        b.iter(|| black_box(si_sdr(&y, &x).unwrap()))
    });
}

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_step_batch4");
    group.sample_size(10);
    for name in ["gcrn_tiny", "cgcrn_tiny"] {
        let mut store = ParamStore::seeded(0);
        let model = Model::build(&preset(name).unwrap(), &mut store).unwrap();
        let set = mixtures(name, 4).unwrap();
        let batch: Vec<_> = set.iter().collect();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let mut g = Graph::new();
                let loss = batch_loss(&mut g, &model, &store, &batch, LossKind::SiSdr).unwrap();
                black_box(g.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

criterion_group!(benches, stft_round_trip, train_step);
criterion_main!(benches);
