use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use neurohand_bench::{ensemble, full_window};
use neurohand_core::model::{backward, ModelConfig, ModelParams, Sample};

fn forward(c: &mut Criterion) {
    let w = full_window(224, 50, 1);
    let x = w.to_time_major();
    let tiny = ModelParams::init(ModelConfig::tiny(), 1).unwrap();
    c.bench_function("forward, tiny config", |b| b.iter(|| tiny.forward(black_box(&x)).unwrap()));

    let mut g = c.benchmark_group("full config");
    g.sample_size(10);
    let full = ModelParams::init(ModelConfig::full(), 1).unwrap();
    g.bench_function("forward", |b| b.iter(|| full.forward(black_box(&x)).unwrap()));
    g.finish();

    let batch: Vec<Sample> = (0..16).map(|_| Sample { x: &x, y: [1.0, 0.0, 0.0, 0.0, 1.0] }).collect();
    c.bench_function("backward, tiny config, batch 16", |b| {
        b.iter(|| backward(&tiny, black_box(&batch), 1e-5, Some(3)).unwrap())
    });
}

fn infer(c: &mut Criterion) {
    let w = full_window(224, 50, 2);
    let mut g = c.benchmark_group("ensemble tick, tiny models");
    for m in 1..=5 {
        let e = ensemble(ModelConfig::tiny(), m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &e, |b, e| b.iter(|| e.infer_tick(&w, || 0).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, forward, infer);
criterion_main!(benches);
