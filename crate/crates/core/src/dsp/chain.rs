//! Anti-alias, decimate, bandpass.

use super::filter::{design_butterworth, FilterSpec, SosFilter};
use crate::error::{Error, Result};
use crate::framing::AlignedChunk;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub input_rate_hz: f64,
    pub decimation: usize,
    pub antialias_order: usize,
    /// Fraction of the post-decimation Nyquist frequency.
    pub antialias_fraction: f64,
    pub bandpass_order: usize,
    pub band_hz: (f64, f64),
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            input_rate_hz: 10_000.0,
            decimation: 2,
            antialias_order: 4,
            antialias_fraction: 0.8,
            bandpass_order: 4,
            band_hz: (25.0, 600.0),
        }
    }
}

impl PreprocessConfig {
    pub fn output_rate_hz(&self) -> f64 {
        self.input_rate_hz / self.decimation as f64
    }

    pub fn antialias_spec(&self) -> FilterSpec {
        let cutoff = self.antialias_fraction * self.output_rate_hz() / 2.0;
        FilterSpec::lowpass(self.antialias_order, cutoff, self.input_rate_hz)
    }

    pub fn bandpass_spec(&self) -> FilterSpec {
        FilterSpec::bandpass(self.bandpass_order, self.band_hz.0, self.band_hz.1, self.output_rate_hz())
    }
}

/// Decimated, filtered samples with per-sample acquisition times.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decimated {
    /// Channel-major samples.
    pub samples: Vec<Vec<f64>>,
    pub acq_ns: Vec<u64>,
}

impl Decimated {
    pub fn len(&self) -> usize {
        self.acq_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acq_ns.is_empty()
    }
}

/// Stateful multichannel pre-processing. Feeding a signal in pieces gives the
/// same output, bit for bit, as feeding it whole.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    cfg: PreprocessConfig,
    antialias: SosFilter,
    bandpass: SosFilter,
    channel_gain: Vec<f64>,
    raw_seen: u64,
}

impl Preprocessor {
    pub fn new(cfg: PreprocessConfig, channels: usize) -> Result<Self> {
        if cfg.decimation == 0 {
            return Err(Error::Config("decimation factor must be positive".into()));
        }
        let antialias = SosFilter::new(design_butterworth(&cfg.antialias_spec())?, channels);
        let bandpass = SosFilter::new(design_butterworth(&cfg.bandpass_spec())?, channels);
        Ok(Self {
            cfg,
            antialias,
            bandpass,
            channel_gain: vec![1.0; channels],
            raw_seen: 0,
        })
    }

    /// Scales each channel after filtering, e.g. to unit training-set RMS.
    pub fn set_channel_gain(&mut self, gain: Vec<f64>) -> Result<()> {
        if gain.len() != self.channels() {
            return Err(Error::Shape(format!(
                "{} channel gains for {} channels",
                gain.len(),
                self.channels()
            )));
        }
        self.channel_gain = gain;
        Ok(())
    }

    pub fn channel_gain(&self) -> &[f64] {
        &self.channel_gain
    }

    pub fn channels(&self) -> usize {
        self.antialias.channels()
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.cfg
    }

    pub fn antialias(&self) -> &SosFilter {
        &self.antialias
    }

    pub fn bandpass(&self) -> &SosFilter {
        &self.bandpass
    }

    /// Processes channel-major raw samples whose first sample was acquired at
    /// `first_ns`, `period_ns` apart.
    pub fn process(&mut self, raw: &[Vec<f64>], first_ns: u64, period_ns: u64) -> Result<Decimated> {
        if raw.len() != self.channels() {
            return Err(Error::Shape(format!(
                "{} channels into a {}-channel preprocessor",
                raw.len(),
                self.channels()
            )));
        }
        let n = raw.first().map_or(0, Vec::len);
        let dec = self.cfg.decimation as u64;
        let keep: Vec<usize> = (0..n).filter(|&i| (self.raw_seen + i as u64) % dec == 0).collect();
        let mut out = Decimated {
            samples: Vec::with_capacity(raw.len()),
            acq_ns: keep.iter().map(|&i| first_ns + i as u64 * period_ns).collect(),
        };
        for (ch, x) in raw.iter().enumerate() {
            if x.len() != n {
                return Err(Error::Shape("ragged channel lengths".into()));
            }
            let mut y = Vec::with_capacity(keep.len());
            let mut k = 0;
            for (i, &v) in x.iter().enumerate() {
                let a = self.antialias.process_sample(ch, v);
                if k < keep.len() && keep[k] == i {
                    y.push(self.bandpass.process_sample(ch, a) * self.channel_gain[ch]);
                    k += 1;
                }
            }
            out.samples.push(y);
        }
        self.raw_seen += n as u64;
        Ok(out)
    }

    pub fn process_chunk(&mut self, chunk: &AlignedChunk) -> Result<Decimated> {
        let raw: Vec<Vec<f64>> = chunk
            .samples
            .iter()
            .map(|ch| ch.iter().map(|&v| v as f64).collect())
            .collect();
        self.process(&raw, chunk.first_sample_ns, crate::framing::SAMPLE_PERIOD_NS)
    }
}
