//! Emulated acquisition devices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::wire::{RawBlock, CHANNELS, DEFAULT_TICKS, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

pub const MAX_PPM: i32 = 2000;

/// Standard deviation, in ADC counts, of the noise a noise-only device emits.
pub const NOISE_ONLY_STD: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceConfig {
    pub device_id: u8,
    pub channels: usize,
    pub sample_rate_hz: u32,
    pub clock_ppm_offset: i32,
    /// The device records only background noise.
    pub noise_only: bool,
}

impl DeviceConfig {
    pub fn new(device_id: u8) -> Self {
        Self {
            device_id,
            channels: CHANNELS,
            sample_rate_hz: SAMPLE_RATE_HZ,
            clock_ppm_offset: 0,
            noise_only: false,
        }
    }

    pub fn with_ppm(mut self, ppm: i32) -> Self {
        self.clock_ppm_offset = ppm;
        self
    }

    pub fn noise_only(mut self) -> Self {
        self.noise_only = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels != CHANNELS {
            return Err(Error::Config(format!("device has {} channels, expected {CHANNELS}", self.channels)));
        }
        if self.sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::Config(format!(
                "device samples at {} Hz, expected {SAMPLE_RATE_HZ}",
                self.sample_rate_hz
            )));
        }
        if self.clock_ppm_offset.abs() > MAX_PPM {
            return Err(Error::Config(format!(
                "clock offset {} ppm outside ±{MAX_PPM}",
                self.clock_ppm_offset
            )));
        }
        Ok(())
    }

    /// Actual sample rate given the clock offset.
    pub fn effective_rate_hz(&self) -> f64 {
        self.sample_rate_hz as f64 * (1.0 + self.clock_ppm_offset as f64 * 1e-6)
    }

    /// Acquisition time of sample `n`, in ns from device start.
    pub fn sample_time_ns(&self, n: u64) -> u64 {
        let denom = self.sample_rate_hz as u128 * (1_000_000 + self.clock_ppm_offset as i64) as u128;
        ((n as u128 * 1_000_000_000 * 1_000_000) / denom) as u64
    }

    /// Number of samples per channel produced in `duration_ns`:
    /// `floor(duration * rate * (1 + ppm * 1e-6))`.
    pub fn samples_in(&self, duration_ns: u64) -> u64 {
        let num = duration_ns as u128
            * self.sample_rate_hz as u128
            * (1_000_000 + self.clock_ppm_offset as i64) as u128;
        (num / (1_000_000_000u128 * 1_000_000)) as u64
    }
}

/// A producer of 8-channel sample ticks.
pub trait SampleSource {
    fn next_tick(&mut self) -> [i16; CHANNELS];
}

/// Emits silence.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroSource;

impl SampleSource for ZeroSource {
    fn next_tick(&mut self) -> [i16; CHANNELS] {
        [0; CHANNELS]
    }
}

impl<F: FnMut() -> [i16; CHANNELS]> SampleSource for F {
    fn next_tick(&mut self) -> [i16; CHANNELS] {
        self()
    }
}

/// Plays back a recorded tick sequence, then silence.
#[derive(Debug, Clone)]
pub struct BufferSource {
    ticks: Vec<[i16; CHANNELS]>,
    pos: usize,
}

impl BufferSource {
    pub fn new(ticks: Vec<[i16; CHANNELS]>) -> Self {
        Self { ticks, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.ticks.len() - self.pos
    }
}

impl SampleSource for BufferSource {
    fn next_tick(&mut self) -> [i16; CHANNELS] {
        let t = self.ticks.get(self.pos).copied().unwrap_or([0; CHANNELS]);
        self.pos += 1;
        t
    }
}

/// Wire bytes of one block together with its timing.
#[derive(Debug, Clone)]
pub struct TimedBlock {
    pub device_id: u8,
    /// Time the last sample of the block was acquired; the block is available from then on.
    pub emit_ns: u64,
    /// Time the first sample was acquired.
    pub acq_ns: u64,
    pub bytes: Vec<u8>,
}

/// One emulated device: turns a sample source into framed, timed blocks.
pub struct DeviceEmulator {
    config: DeviceConfig,
    seq: u16,
    produced: u64,
    noise: ChaCha8Rng,
}

impl DeviceEmulator {
    pub fn new(config: DeviceConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            seq: 0,
            produced: 0,
            noise: ChaCha8Rng::seed_from_u64(seed ^ ((config.device_id as u64) << 56)),
        })
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn samples_produced(&self) -> u64 {
        self.produced
    }

    /// Time at which a block of `ticks` more samples would be complete.
    pub fn next_emit_ns(&self, ticks: usize) -> u64 {
        self.config.sample_time_ns(self.produced + ticks as u64 - 1)
    }

    /// Produces the next block of `ticks` samples.
    pub fn next_block(&mut self, source: &mut dyn SampleSource, ticks: usize) -> TimedBlock {
        let normal = Normal::new(0.0, NOISE_ONLY_STD).expect("valid std");
        let mut samples = Vec::with_capacity(ticks * CHANNELS);
        for _ in 0..ticks {
            let tick = source.next_tick();
            if self.config.noise_only {
                for _ in 0..CHANNELS {
                    let v: f64 = normal.sample(&mut self.noise);
                    samples.push(v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16);
                }
            } else {
                samples.extend_from_slice(&tick);
            }
        }
        let block = RawBlock::new(self.config.device_id, self.seq, samples)
            .expect("tick count within limits");
        let acq_ns = self.config.sample_time_ns(self.produced);
        let emit_ns = self.config.sample_time_ns(self.produced + ticks as u64 - 1);
        self.produced += ticks as u64;
        self.seq = self.seq.wrapping_add(1);
        TimedBlock {
            device_id: self.config.device_id,
            emit_ns,
            acq_ns,
            bytes: block.to_bytes(),
        }
    }
}

/// Runs one device for `duration_ns`, producing full blocks of
/// [`DEFAULT_TICKS`] followed by a final partial block for the remainder.
pub fn emulate_device(
    config: DeviceConfig,
    source: &mut dyn SampleSource,
    duration_ns: u64,
    seed: u64,
) -> Result<Vec<TimedBlock>> {
    let mut dev = DeviceEmulator::new(config, seed)?;
    let total = config.samples_in(duration_ns);
    let mut out = Vec::with_capacity((total as usize).div_ceil(DEFAULT_TICKS));
    while dev.samples_produced() < total {
        let ticks = (total - dev.samples_produced()).min(DEFAULT_TICKS as u64) as usize;
        out.push(dev.next_block(source, ticks));
    }
    Ok(out)
}

/// Several devices advancing on their own clocks, merged in emission order.
pub struct DeviceBank {
    devices: Vec<(DeviceEmulator, Box<dyn SampleSource + Send>)>,
    ticks: usize,
    limit_ns: Option<u64>,
}

impl DeviceBank {
    pub fn new(ticks: usize) -> Self {
        Self {
            devices: Vec::new(),
            ticks,
            limit_ns: None,
        }
    }

    pub fn add(&mut self, config: DeviceConfig, source: Box<dyn SampleSource + Send>, seed: u64) -> Result<()> {
        if self.devices.iter().any(|(d, _)| d.config().device_id == config.device_id) {
            return Err(Error::Config(format!("duplicate device id {}", config.device_id)));
        }
        self.devices.push((DeviceEmulator::new(config, seed)?, source));
        Ok(())
    }

    /// Stops emitting blocks whose last sample falls after `limit_ns`.
    pub fn until(mut self, limit_ns: u64) -> Self {
        self.limit_ns = Some(limit_ns);
        self
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn device_ids(&self) -> Vec<u8> {
        self.devices.iter().map(|(d, _)| d.config().device_id).collect()
    }

    /// Emission time of the next block, if any remain.
    pub fn peek_emit_ns(&self) -> Option<u64> {
        self.devices
            .iter()
            .map(|(d, _)| d.next_emit_ns(self.ticks))
            .min()
            .filter(|&t| self.limit_ns.map_or(true, |l| t <= l))
    }
}

impl Iterator for DeviceBank {
    type Item = TimedBlock;

    fn next(&mut self) -> Option<TimedBlock> {
        let ticks = self.ticks;
        let (idx, t) = self
            .devices
            .iter()
            .enumerate()
            .map(|(i, (d, _))| (i, d.next_emit_ns(ticks)))
            .min_by_key(|&(i, t)| (t, i))?;
        if self.limit_ns.is_some_and(|l| t > l) {
            return None;
        }
        let (dev, src) = &mut self.devices[idx];
        Some(dev.next_block(src.as_mut(), ticks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::wire::{decode_stream, DecodeEvent};

    #[test]
    fn nominal_second_is_200_blocks() {
        let blocks = emulate_device(DeviceConfig::new(0), &mut ZeroSource, 1_000_000_000, 1).unwrap();
        assert_eq!(blocks.len(), 200);
        let samples: usize = blocks
            .iter()
            .flat_map(|b| decode_stream(&b.bytes))
            .map(|e| match e {
                DecodeEvent::Block(b) => b.tick_count(),
                DecodeEvent::Resync { .. } => panic!("clean stream"),
            })
            .sum();
        assert_eq!(samples, 10_000);
        assert_eq!(blocks[199].emit_ns, 999_900_000);
    }

    #[test]
    fn fast_clock_produces_extra_samples() {
        let cfg = DeviceConfig::new(0).with_ppm(1000);
        let blocks = emulate_device(cfg, &mut ZeroSource, 10_000_000_000, 1).unwrap();
        let total: usize = blocks.iter().map(|b| (b.bytes.len() - 9) / 16).sum();
        let expected = (10.0f64 * 10_000.0 * (1.0 + 1000.0 * 1e-6)).floor() as usize;
        assert!(total.abs_diff(expected) <= 1, "{total} vs {expected}");
    }

    #[test]
    fn ppm_bound_enforced() {
        assert!(DeviceEmulator::new(DeviceConfig::new(0).with_ppm(2001), 0).is_err());
        assert!(DeviceEmulator::new(DeviceConfig::new(0).with_ppm(-2000), 0).is_ok());
    }

    #[test]
    fn bank_interleaves_by_time() {
        let mut bank = DeviceBank::new(50).until(100_000_000);
        bank.add(DeviceConfig::new(0).with_ppm(500), Box::new(ZeroSource), 1).unwrap();
        bank.add(DeviceConfig::new(1).with_ppm(-500), Box::new(ZeroSource), 1).unwrap();
        let blocks: Vec<_> = bank.collect();
        assert!(blocks.windows(2).all(|w| w[0].emit_ns <= w[1].emit_ns));
        assert!(blocks.iter().any(|b| b.device_id == 1));
        assert!(blocks.iter().all(|b| b.emit_ns <= 100_000_000));
    }
}
