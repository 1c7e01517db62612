//! Pre-processing: filtering, decimation, feature extraction and the rolling
//! feature window.

pub mod chain;
pub mod features;
pub mod filter;
pub mod window;

pub use chain::{Decimated, PreprocessConfig, Preprocessor};
pub use features::{
    window_features, FeatureConfig, FeatureExtractor, FeatureVector, Standardizer, FEATURE_COUNT, FEATURE_NAMES,
};
pub use filter::{design_butterworth, Biquad, FilterKind, FilterSpec, Sos, SosFilter};
pub use window::FeatureWindow;

use crate::error::Result;
use crate::framing::AlignedChunk;

/// Preprocessor, feature extractor and optional standardization chained
/// together: aligned raw chunks in, decoder-ready feature vectors out.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    pre: Preprocessor,
    extractor: FeatureExtractor,
    standardizer: Option<Standardizer>,
}

impl FrontEnd {
    pub fn new(pre: Preprocessor, features: FeatureConfig, standardizer: Option<Standardizer>) -> Result<Self> {
        let extractor = FeatureExtractor::new(pre.channels(), features)?;
        if let Some(s) = &standardizer {
            if s.dim() != pre.channels() * FEATURE_COUNT {
                return Err(crate::Error::Shape(format!(
                    "standardizer of {} features for {} channels",
                    s.dim(),
                    pre.channels()
                )));
            }
        }
        Ok(Self {
            pre,
            extractor,
            standardizer,
        })
    }

    /// Default chain for `channels` inputs with optional calibration.
    pub fn with_calibration(channels: usize, channel_gain: Option<Vec<f64>>, standardizer: Option<Standardizer>) -> Result<Self> {
        let mut pre = Preprocessor::new(PreprocessConfig::default(), channels)?;
        if let Some(g) = channel_gain {
            pre.set_channel_gain(g)?;
        }
        Self::new(pre, FeatureConfig::default(), standardizer)
    }

    pub fn feature_dim(&self) -> usize {
        self.pre.channels() * FEATURE_COUNT
    }

    pub fn preprocessor(&self) -> &Preprocessor {
        &self.pre
    }

    pub fn process_chunk(&mut self, chunk: &AlignedChunk) -> Result<Vec<FeatureVector>> {
        let dec = self.pre.process_chunk(chunk)?;
        Ok(self.features_of(&dec))
    }

    pub fn process(&mut self, raw: &[Vec<f64>], first_ns: u64, period_ns: u64) -> Result<Vec<FeatureVector>> {
        let dec = self.pre.process(raw, first_ns, period_ns)?;
        Ok(self.features_of(&dec))
    }

    fn features_of(&mut self, dec: &Decimated) -> Vec<FeatureVector> {
        let mut out = self.extractor.push_block(&dec.samples, &dec.acq_ns);
        if let Some(s) = &self.standardizer {
            for v in &mut out {
                s.apply(&mut v.values);
            }
        }
        out
    }
}

/// Per-channel gains and feature standardization fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub channel_gain: Vec<f64>,
    pub standardizer: Standardizer,
}

impl Calibration {
    pub fn identity(channels: usize) -> Self {
        Self {
            channel_gain: vec![1.0; channels],
            standardizer: Standardizer::identity(channels * FEATURE_COUNT),
        }
    }

    pub fn channels(&self) -> usize {
        self.channel_gain.len()
    }

    /// Fits unit bandpassed RMS per channel, then feature mean and scale, over
    /// channel-major raw recordings.
    pub fn fit<'a>(recordings: impl IntoIterator<Item = &'a [Vec<i16>]> + Clone) -> Result<Self> {
        let channels = match recordings.clone().into_iter().next() {
            Some(r) => r.len(),
            None => return Err(crate::Error::EmptyDataset),
        };
        let mut sq = vec![0.0; channels];
        let mut n = 0usize;
        for rec in recordings.clone() {
            let mut pre = Preprocessor::new(PreprocessConfig::default(), channels)?;
            for piece in raw_pieces(rec, channels)? {
                let d = pre.process(&piece, 0, crate::framing::SAMPLE_PERIOD_NS)?;
                for (s, ch) in sq.iter_mut().zip(&d.samples) {
                    *s += ch.iter().map(|v| v * v).sum::<f64>();
                }
                n += d.len();
            }
        }
        if n == 0 {
            return Err(crate::Error::EmptyDataset);
        }
        let channel_gain: Vec<f64> = sq
            .iter()
            .map(|s| {
                let rms = (s / n as f64).sqrt();
                if rms > 0.0 {
                    1.0 / rms
                } else {
                    1.0
                }
            })
            .collect();
        let gains_only = Self {
            channel_gain: channel_gain.clone(),
            standardizer: Standardizer::identity(channels * FEATURE_COUNT),
        };
        let seqs = recordings
            .into_iter()
            .map(|r| extract_sequence(&gains_only, r))
            .collect::<Result<Vec<_>>>()?;
        let standardizer = Standardizer::fit(
            channels * FEATURE_COUNT,
            seqs.iter().flat_map(|s| s.values.chunks(s.dim)),
        )?;
        Ok(Self {
            channel_gain,
            standardizer,
        })
    }

    pub fn front_end(&self) -> Result<FrontEnd> {
        FrontEnd::with_calibration(self.channels(), Some(self.channel_gain.clone()), Some(self.standardizer.clone()))
    }
}

/// Feature vectors of one recording, time-major (`values[k * dim..(k + 1) * dim]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub dim: usize,
    pub values: Vec<f64>,
    /// Acquisition time of each vector's newest sample, with raw sample `i` at `i × 100 µs`.
    pub times_ns: Vec<u64>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.times_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ns.is_empty()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// The `steps` vectors ending at `k`, inclusive, time-major.
    pub fn window(&self, k: usize, steps: usize) -> &[f64] {
        &self.values[(k + 1 - steps) * self.dim..(k + 1) * self.dim]
    }
}

const PIECE: usize = 10_000;

fn raw_pieces(rec: &[Vec<i16>], channels: usize) -> Result<impl Iterator<Item = Vec<Vec<f64>>> + '_> {
    if rec.len() != channels || rec.iter().any(|c| c.len() != rec[0].len()) {
        return Err(crate::Error::Shape("recordings must share a channel count and be rectangular".into()));
    }
    let n = rec.first().map_or(0, Vec::len);
    Ok((0..n).step_by(PIECE).map(move |s| {
        let e = (s + PIECE).min(n);
        rec.iter().map(|c| c[s..e].iter().map(|&v| v as f64).collect()).collect()
    }))
}

/// Runs a fresh calibrated front end over a whole raw recording.
pub fn extract_sequence(cal: &Calibration, rec: &[Vec<i16>]) -> Result<FeatureSequence> {
    let mut fe = cal.front_end()?;
    let dim = fe.feature_dim();
    let mut out = FeatureSequence {
        dim,
        values: Vec::new(),
        times_ns: Vec::new(),
    };
    let mut first = 0u64;
    for piece in raw_pieces(rec, cal.channels())? {
        let len = piece[0].len() as u64;
        for v in fe.process(&piece, first * crate::framing::SAMPLE_PERIOD_NS, crate::framing::SAMPLE_PERIOD_NS)? {
            out.values.extend_from_slice(&v.values);
            out.times_ns.push(v.acq_timestamp_ns);
        }
        first += len;
    }
    Ok(out)
}
