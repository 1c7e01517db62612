use crate::error::{Error, Result};
use crate::framing::{
    replay_blocks, BufferSource, DeviceBank, DeviceConfig, TimedBlock, CHANNELS, SAMPLE_PERIOD_NS,
};

/// Real-time-paced block source.
pub enum Source {
    Emulated(DeviceBank),
    /// Pre-timed blocks in emission order, e.g. from a replayed recording.
    Recorded(Vec<TimedBlock>),
}

impl Source {
    /// Restamps a recorded wire stream at the nominal sample rate.
    pub fn replay(bytes: &[u8]) -> Self {
        let (per_device, _) = replay_blocks(bytes);
        let mut blocks: Vec<TimedBlock> = per_device
            .into_iter()
            .flatten()
            .map(|b| TimedBlock {
                device_id: b.device_id,
                acq_ns: b.acq_timestamp_ns,
                emit_ns: b.acq_timestamp_ns + (b.tick_count().max(1) as u64 - 1) * SAMPLE_PERIOD_NS,
                bytes: b.to_bytes(),
            })
            .collect();
        blocks.sort_by_key(|b| (b.emit_ns, b.device_id));
        Source::Recorded(blocks)
    }

    pub fn device_ids(&self) -> Vec<u8> {
        match self {
            Source::Emulated(bank) => bank.device_ids(),
            Source::Recorded(blocks) => {
                let mut ids: Vec<u8> = blocks.iter().map(|b| b.device_id).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            }
        }
    }

    /// Blocks whose last sample falls at or before `limit_ns`.
    pub(crate) fn blocks(self, limit_ns: u64) -> Box<dyn Iterator<Item = TimedBlock> + Send> {
        match self {
            Source::Emulated(bank) => Box::new(bank.until(limit_ns)),
            Source::Recorded(blocks) => Box::new(blocks.into_iter().take_while(move |b| b.emit_ns <= limit_ns)),
        }
    }
}

/// One emulated device per 8 channels of a channel-major recording, with
/// per-device clock offsets. Devices fall silent (zeros) past the recording.
pub fn bank_from_signal(signal: &[Vec<i16>], ppm: &[i32], seed: u64) -> Result<DeviceBank> {
    if signal.is_empty() || signal.len() % CHANNELS != 0 {
        return Err(Error::Shape(format!("{} channels is not a whole number of devices", signal.len())));
    }
    let devices = signal.len() / CHANNELS;
    if ppm.len() != devices {
        return Err(Error::Config(format!("{} clock offsets for {devices} devices", ppm.len())));
    }
    let n = signal[0].len();
    let mut bank = DeviceBank::new(crate::framing::wire::DEFAULT_TICKS);
    for (d, &p) in ppm.iter().enumerate() {
        let ticks: Vec<[i16; CHANNELS]> =
            (0..n).map(|t| std::array::from_fn(|c| signal[d * CHANNELS + c][t])).collect();
        bank.add(DeviceConfig::new(d as u8).with_ppm(p), Box::new(BufferSource::new(ticks)), seed)?;
    }
    Ok(bank)
}
