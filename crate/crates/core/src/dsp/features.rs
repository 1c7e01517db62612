//! Time-domain features over sliding windows.

use std::io::Write;

use crate::error::{Error, Result};

pub const FEATURE_COUNT: usize = 14;

/// Column order of the per-channel feature block.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mav", "iav", "rms", "var", "wl", "zc", "ssc", "wamp", "log", "damv", "ssi", "max", "skew", "kurt",
];

/// Window of 100 ms at 5 kHz.
pub const DEFAULT_WINDOW: usize = 500;
/// Stride of 20 ms at 5 kHz, giving 50 feature vectors per second.
pub const DEFAULT_STRIDE: usize = 100;

/// Thresholds applied to signals normalized to unit RMS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Dead zone for zero crossings and slope sign changes.
    pub deadzone: f64,
    /// Willison amplitude threshold.
    pub wamp_threshold: f64,
    /// Added to |x| before taking the log in the log detector.
    pub log_guard: f64,
    pub window: usize,
    pub stride: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            deadzone: 0.01,
            wamp_threshold: 0.05,
            log_guard: 1e-6,
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
        }
    }
}

/// Computes the fourteen features of one window, in [`FEATURE_NAMES`] order.
///
/// Skewness and kurtosis are the population moment ratios `m3 / m2^1.5` and
/// `m4 / m2^2`, defined as 0 when the window has zero variance.
pub fn window_features(x: &[f64], cfg: &FeatureConfig) -> [f64; FEATURE_COUNT] {
    let n = x.len() as f64;
    let iav: f64 = x.iter().map(|v| v.abs()).sum();
    let mav = iav / n;
    let ssi: f64 = x.iter().map(|v| v * v).sum();
    let rms = (ssi / n).sqrt();
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - mean) * (v - mean) * (v - mean)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean) * (v - mean) * (v - mean) * (v - mean)).sum::<f64>() / n;

    let mut wl = 0.0;
    let mut zc = 0usize;
    let mut wamp = 0usize;
    for w in x.windows(2) {
        let d = (w[1] - w[0]).abs();
        wl += d;
        if w[0] * w[1] < 0.0 && d >= cfg.deadzone {
            zc += 1;
        }
        if d >= cfg.wamp_threshold {
            wamp += 1;
        }
    }
    let ssc = x
        .windows(3)
        .filter(|w| (w[1] - w[0]) * (w[1] - w[2]) >= cfg.deadzone)
        .count();
    let damv = if x.len() > 1 { wl / (n - 1.0) } else { 0.0 };
    let log = (x.iter().map(|v| (v.abs() + cfg.log_guard).ln()).sum::<f64>() / n).exp();
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    [
        mav, iav, rms, m2, wl, zc as f64, ssc as f64, wamp as f64, log, damv, ssi, max, skew, kurt,
    ]
}

/// Features for all channels at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// `values[channel * 14 + feature]`.
    pub values: Vec<f64>,
    /// Index one past the newest 5 kHz sample in the window.
    pub window_end_sample_index: u64,
    /// Acquisition time of the newest contributing sample.
    pub acq_timestamp_ns: u64,
}

impl FeatureVector {
    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.values[ch * FEATURE_COUNT..(ch + 1) * FEATURE_COUNT]
    }
}

/// Streaming extractor: holds the last `window` samples of every channel and
/// emits a vector every `stride` samples once the first window is full.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    channels: usize,
    // ring buffer per channel, capacity cfg.window
    rings: Vec<Vec<f64>>,
    head: usize,
    seen: u64,
    scratch: Vec<f64>,
}

impl FeatureExtractor {
    pub fn new(channels: usize, cfg: FeatureConfig) -> Result<Self> {
        if cfg.stride == 0 || cfg.window < cfg.stride {
            return Err(Error::Config(format!(
                "window {} must be at least stride {} > 0",
                cfg.window, cfg.stride
            )));
        }
        Ok(Self {
            cfg,
            channels,
            rings: vec![vec![0.0; cfg.window]; channels],
            head: 0,
            seen: 0,
            scratch: Vec::with_capacity(cfg.window),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Samples consumed so far.
    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    /// Pushes one multichannel sample; returns a vector if this sample completes a window step.
    pub fn push(&mut self, sample: &[f64], acq_ns: u64) -> Option<FeatureVector> {
        debug_assert_eq!(sample.len(), self.channels);
        for (ring, &v) in self.rings.iter_mut().zip(sample) {
            ring[self.head] = v;
        }
        self.head = (self.head + 1) % self.cfg.window;
        self.seen += 1;
        let w = self.cfg.window as u64;
        if self.seen < w || (self.seen - w) % self.cfg.stride as u64 != 0 {
            return None;
        }
        let mut values = Vec::with_capacity(self.channels * FEATURE_COUNT);
        for ring in &self.rings {
            self.scratch.clear();
            self.scratch.extend_from_slice(&ring[self.head..]);
            self.scratch.extend_from_slice(&ring[..self.head]);
            values.extend_from_slice(&window_features(&self.scratch, &self.cfg));
        }
        Some(FeatureVector {
            values,
            window_end_sample_index: self.seen,
            acq_timestamp_ns: acq_ns,
        })
    }

    /// Pushes channel-major blocks of samples with their timestamps.
    pub fn push_block(&mut self, channels: &[Vec<f64>], acq_ns: &[u64]) -> Vec<FeatureVector> {
        let mut out = Vec::new();
        let mut frame = vec![0.0; self.channels];
        for (i, &t) in acq_ns.iter().enumerate() {
            for (f, ch) in frame.iter_mut().zip(channels) {
                *f = ch[i];
            }
            out.extend(self.push(&frame, t));
        }
        out
    }
}

/// Number of vectors produced from `n` samples.
pub fn expected_vector_count(n: usize, window: usize, stride: usize) -> usize {
    if n < window {
        0
    } else {
        (n - window) / stride + 1
    }
}

/// Writes `t,ch,f1..f14` rows, `t` in seconds.
pub fn write_feature_csv<W: Write>(mut out: W, vectors: &[FeatureVector]) -> Result<()> {
    write!(out, "t,ch")?;
    for i in 1..=FEATURE_COUNT {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for v in vectors {
        let t = v.acq_timestamp_ns as f64 / 1e9;
        for ch in 0..v.values.len() / FEATURE_COUNT {
            write!(out, "{t:.6},{ch}")?;
            for x in v.channel(ch) {
                write!(out, ",{x:e}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

/// Per-feature affine standardization fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Fits mean and inverse standard deviation over rows of length `dim`.
    pub fn fit<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape(format!("row of {} values, expected {dim}", row.len())));
            }
            count += 1;
            for ((s, q), &v) in sum.iter_mut().zip(&mut sq).zip(row) {
                *s += v;
                *q += v * v;
            }
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let scale = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 1e-18 {
                    1.0 / var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &mut [f64]) {
        for ((v, m), s) in values.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) * s;
        }
    }
}
