use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use neurohand_bench::noise_chunk;
use neurohand_core::dsp::{window_features, FeatureConfig, FrontEnd, Preprocessor, PreprocessConfig};

fn filters(c: &mut Criterion) {
    let chunk = noise_chunk(50, 0, 1);
    let pre = Preprocessor::new(PreprocessConfig::default(), 16).unwrap();
    c.bench_function("preprocess 5 ms chunk, 16 ch", |b| {
        b.iter_batched_ref(|| pre.clone(), |p| p.process_chunk(black_box(&chunk)).unwrap(), BatchSize::SmallInput)
    });
}

fn features(c: &mut Criterion) {
    let cfg = FeatureConfig::default();
    let x: Vec<f64> = noise_chunk(500, 0, 2).samples[0].iter().map(|&v| v as f64).collect();
    c.bench_function("14 features, one 500-sample window", |b| b.iter(|| window_features(black_box(&x), &cfg)));

    // One stride of raw data through a warmed-up front end emits one vector.
    let mut fe = FrontEnd::with_calibration(16, None, None).unwrap();
    for k in 0..40 {
        fe.process_chunk(&noise_chunk(50, k * 50, k)).unwrap();
    }
    let stride: Vec<_> = (40..44).map(|k| noise_chunk(50, k * 50, k)).collect();
    c.bench_function("front end, one 20 ms stride", |b| {
        b.iter_batched_ref(
            || fe.clone(),
            |fe| {
                let mut n = 0;
                for ch in &stride {
                    n += fe.process_chunk(ch).unwrap().len();
                }
                n
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, filters, features);
criterion_main!(benches);
