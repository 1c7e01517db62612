//! Shared inputs for the criterion benches.

use neurohand_core::decoder::Ensemble;
use neurohand_core::dsp::FeatureWindow;
use neurohand_core::framing::{AlignedChunk, SAMPLE_PERIOD_NS};
use neurohand_core::model::{ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` ticks of uniform noise on 16 channels.
pub fn noise_chunk(n: usize, base: u64, seed: u64) -> AlignedChunk {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AlignedChunk {
        sample_index_base: base,
        samples: (0..16).map(|_| (0..n).map(|_| rng.gen_range(-2000..2000)).collect()).collect(),
        first_sample_ns: base * SAMPLE_PERIOD_NS,
        dropped_ms: 0.0,
        zero_filled: 0,
    }
}

pub fn full_window(rows: usize, steps: usize, seed: u64) -> FeatureWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = FeatureWindow::new(rows, steps);
    for i in 0..steps as u64 {
        let v: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        w.push_values(&v, i * 20_000_000).expect("matching rows");
    }
    w
}

/// `m` models splitting the five fingers.
pub fn ensemble(config: ModelConfig, m: usize) -> Ensemble {
    let models = (0..m)
        .map(|i| {
            let mask: [bool; 5] = std::array::from_fn(|f| f.min(m - 1) == i);
            ModelParams::init(config.clone().with_mask(mask), i as u64).expect("valid config")
        })
        .collect();
    Ensemble::new(models, 0.5, None).expect("disjoint owners")
}
