//! Multi-device stream alignment.
//!
//! Each device delivers blocks stamped with the acquisition time of their first
//! sample. The aligner pairs samples across devices by position and watches the
//! acquisition times of each device's oldest pending sample. When one device's
//! head is older than another's by more than one block duration, that device has
//! produced surplus data (its clock runs fast, or the other one stalled its
//! start) and the surplus is dropped from its head, at most `max_drop_ms` per
//! event. Sequence gaps are zero-filled.

use std::collections::VecDeque;

use super::wire::{RawBlock, CHANNELS, DEFAULT_TICKS, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// Nominal sample period in ns.
pub const SAMPLE_PERIOD_NS: u64 = 1_000_000_000 / SAMPLE_RATE_HZ as u64;
pub const DEFAULT_MAX_DROP_MS: u32 = 60;

/// Samples from all devices over the same stretch of time.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedChunk {
    /// Global 10 kHz sample counter of the first sample.
    pub sample_index_base: u64,
    /// One array per channel, devices in ascending id order (`device * 8 + channel`).
    pub samples: Vec<Vec<i16>>,
    /// Acquisition time of the first sample, taken from the most recent device.
    pub first_sample_ns: u64,
    /// Raw data discarded to realign before this chunk.
    pub dropped_ms: f64,
    /// Number of zero-filled samples per channel in this chunk, summed over devices.
    pub zero_filled: usize,
}

impl AlignedChunk {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }

    /// Acquisition time of sample `i` of this chunk.
    pub fn sample_ns(&self, i: usize) -> u64 {
        self.first_sample_ns + i as u64 * SAMPLE_PERIOD_NS
    }

    /// Acquisition time of the newest sample.
    pub fn last_sample_ns(&self) -> u64 {
        self.sample_ns(self.len().saturating_sub(1))
    }

    pub fn duration_ms(&self) -> f64 {
        self.len() as f64 * SAMPLE_PERIOD_NS as f64 / 1e6
    }
}

/// Per-device sample accounting.
///
/// `received + zero_filled == emitted + dropped + pending` at all times.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DeviceLedger {
    pub received: u64,
    pub zero_filled: u64,
    pub emitted: u64,
    pub dropped: u64,
    pub pending: u64,
}

impl DeviceLedger {
    pub fn balances(&self) -> bool {
        self.received + self.zero_filled == self.emitted + self.dropped + self.pending
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RealignEvent {
    pub device_id: u8,
    pub dropped_samples: usize,
}

impl RealignEvent {
    pub fn dropped_ms(&self) -> f64 {
        self.dropped_samples as f64 * SAMPLE_PERIOD_NS as f64 / 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapEvent {
    pub device_id: u8,
    pub missing_blocks: u16,
}

#[derive(Debug)]
struct Segment {
    ts: u64,
    frames: Vec<[i16; CHANNELS]>,
    offset: usize,
    filled: bool,
}

impl Segment {
    fn head_ns(&self) -> u64 {
        self.ts + self.offset as u64 * SAMPLE_PERIOD_NS
    }

    fn remaining(&self) -> usize {
        self.frames.len() - self.offset
    }
}

#[derive(Debug)]
struct DeviceQueue {
    device_id: u8,
    segments: VecDeque<Segment>,
    pending: usize,
    next_seq: Option<u16>,
    ledger: DeviceLedger,
}

impl DeviceQueue {
    fn head_ns(&self) -> Option<u64> {
        self.segments.front().map(Segment::head_ns)
    }

    fn discard(&mut self, mut n: usize) {
        while n > 0 {
            let seg = self.segments.front_mut().expect("pending accounting");
            let take = n.min(seg.remaining());
            seg.offset += take;
            n -= take;
            self.pending -= take;
            if seg.remaining() == 0 {
                self.segments.pop_front();
            }
        }
    }

    fn take_into(&mut self, mut n: usize, out: &mut [Vec<i16>]) {
        while n > 0 {
            let seg = self.segments.front_mut().expect("pending accounting");
            let take = n.min(seg.remaining());
            for frame in &seg.frames[seg.offset..seg.offset + take] {
                for (c, v) in frame.iter().enumerate() {
                    out[c].push(*v);
                }
            }
            seg.offset += take;
            n -= take;
            self.pending -= take;
            if seg.remaining() == 0 {
                self.segments.pop_front();
            }
        }
    }
}

/// Aligns per-device block streams into multi-device chunks.
#[derive(Debug)]
pub struct Aligner {
    devices: Vec<DeviceQueue>,
    max_drop_samples: usize,
    lead_threshold_ns: u64,
    block_ticks: usize,
    chunk_cap: usize,
    emitted: u64,
    carry_drop: usize,
    realign_events: Vec<RealignEvent>,
    gap_events: Vec<GapEvent>,
}

impl Aligner {
    /// Creates an aligner for the given devices (any order; output is sorted by id).
    pub fn new(device_ids: &[u8], max_drop_ms: u32) -> Result<Self> {
        if device_ids.is_empty() {
            return Err(Error::Config("aligner needs at least one device".into()));
        }
        let mut ids = device_ids.to_vec();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate device id".into()));
        }
        let block_ticks = DEFAULT_TICKS;
        Ok(Self {
            devices: ids
                .into_iter()
                .map(|device_id| DeviceQueue {
                    device_id,
                    segments: VecDeque::new(),
                    pending: 0,
                    next_seq: None,
                    ledger: DeviceLedger::default(),
                })
                .collect(),
            max_drop_samples: (max_drop_ms as u64 * 1_000_000 / SAMPLE_PERIOD_NS) as usize,
            lead_threshold_ns: block_ticks as u64 * SAMPLE_PERIOD_NS,
            block_ticks,
            chunk_cap: block_ticks,
            emitted: 0,
            carry_drop: 0,
            realign_events: Vec::new(),
            gap_events: Vec::new(),
        })
    }

    pub fn channel_count(&self) -> usize {
        self.devices.len() * CHANNELS
    }

    /// Adds a block. Gaps in the sequence are zero-filled; a block that repeats
    /// or precedes an already-seen sequence number is dropped whole.
    pub fn push(&mut self, block: &RawBlock) -> Result<()> {
        let block_ticks = self.block_ticks;
        let dev = self
            .devices
            .iter_mut()
            .find(|d| d.device_id == block.device_id)
            .ok_or_else(|| Error::Config(format!("unknown device id {}", block.device_id)))?;
        let ticks = block.tick_count();
        dev.ledger.received += ticks as u64;
        if let Some(expected) = dev.next_seq {
            let gap = block.seq.wrapping_sub(expected);
            if gap >= 0x8000 {
                dev.ledger.dropped += ticks as u64;
                self.gap_events.push(GapEvent {
                    device_id: block.device_id,
                    missing_blocks: 0,
                });
                return Ok(());
            }
            if gap > 0 {
                let fill = gap as usize * block_ticks;
                let fill_ns = fill as u64 * SAMPLE_PERIOD_NS;
                dev.segments.push_back(Segment {
                    ts: block.acq_timestamp_ns.saturating_sub(fill_ns),
                    frames: vec![[0; CHANNELS]; fill],
                    offset: 0,
                    filled: true,
                });
                dev.pending += fill;
                dev.ledger.zero_filled += fill as u64;
                self.gap_events.push(GapEvent {
                    device_id: block.device_id,
                    missing_blocks: gap,
                });
            }
        }
        dev.next_seq = Some(block.seq.wrapping_add(1));
        if ticks > 0 {
            dev.segments.push_back(Segment {
                ts: block.acq_timestamp_ns,
                frames: block
                    .samples
                    .chunks_exact(CHANNELS)
                    .map(|c| c.try_into().expect("exact chunk"))
                    .collect(),
                offset: 0,
                filled: false,
            });
            dev.pending += ticks;
        }
        dev.ledger.pending = dev.pending as u64;
        Ok(())
    }

    /// Emits every chunk that can be formed from data present on all devices.
    pub fn poll(&mut self) -> Vec<AlignedChunk> {
        let mut out = Vec::new();
        while self.devices.iter().all(|d| d.pending > 0) {
            let dropped = self.realign();
            let n = self
                .devices
                .iter()
                .map(|d| d.pending)
                .min()
                .unwrap_or(0)
                .min(self.chunk_cap);
            if n == 0 {
                if dropped > 0 {
                    // Dropped data still needs reporting; attach it to the next chunk.
                    self.carry_drop = self.carry_drop.max(dropped);
                }
                break;
            }
            let first_sample_ns = self.devices.iter().filter_map(DeviceQueue::head_ns).max().unwrap_or(0);
            let mut samples = vec![Vec::with_capacity(n); self.channel_count()];
            let mut zero_filled = 0;
            for (k, dev) in self.devices.iter_mut().enumerate() {
                zero_filled += count_filled(dev, n);
                dev.take_into(n, &mut samples[k * CHANNELS..(k + 1) * CHANNELS]);
                dev.ledger.emitted += n as u64;
                dev.ledger.pending = dev.pending as u64;
            }
            let dropped = dropped.max(std::mem::take(&mut self.carry_drop));
            out.push(AlignedChunk {
                sample_index_base: self.emitted,
                samples,
                first_sample_ns,
                dropped_ms: dropped as f64 * SAMPLE_PERIOD_NS as f64 / 1e6,
                zero_filled,
            });
            self.emitted += n as u64;
        }
        out
    }

    fn realign(&mut self) -> usize {
        let Some(newest) = self.devices.iter().filter_map(DeviceQueue::head_ns).max() else {
            return 0;
        };
        let mut max_dropped = 0;
        for dev in &mut self.devices {
            let head = dev.head_ns().expect("pending > 0");
            let lead = newest - head;
            if lead <= self.lead_threshold_ns {
                continue;
            }
            let surplus = ((lead + SAMPLE_PERIOD_NS / 2) / SAMPLE_PERIOD_NS) as usize;
            let n = surplus.min(self.max_drop_samples).min(dev.pending);
            if n == 0 {
                continue;
            }
            dev.discard(n);
            dev.ledger.dropped += n as u64;
            dev.ledger.pending = dev.pending as u64;
            self.realign_events.push(RealignEvent {
                device_id: dev.device_id,
                dropped_samples: n,
            });
            max_dropped = max_dropped.max(n);
        }
        max_dropped
    }

    pub fn realign_events(&self) -> &[RealignEvent] {
        &self.realign_events
    }

    pub fn gap_events(&self) -> &[GapEvent] {
        &self.gap_events
    }

    pub fn ledger(&self, device_id: u8) -> Option<DeviceLedger> {
        self.devices.iter().find(|d| d.device_id == device_id).map(|d| d.ledger)
    }

    pub fn ledgers(&self) -> Vec<(u8, DeviceLedger)> {
        self.devices.iter().map(|d| (d.device_id, d.ledger)).collect()
    }

    /// Samples per channel emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }
}

// How many of the next `n` frames of `dev` were zero-filled.
fn count_filled(dev: &DeviceQueue, mut n: usize) -> usize {
    let mut filled = 0;
    for seg in &dev.segments {
        if n == 0 {
            break;
        }
        let take = n.min(seg.remaining());
        if seg.filled {
            filled += take;
        }
        n -= take;
    }
    filled
}

/// Runs blocks through a fresh aligner and collects the output.
pub fn align(streams: &[Vec<RawBlock>], max_drop_ms: u32) -> Result<(Vec<AlignedChunk>, Aligner)> {
    let ids: Vec<u8> = streams
        .iter()
        .map(|s| s.first().map(|b| b.device_id))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Config("empty device stream".into()))?;
    let mut aligner = Aligner::new(&ids, max_drop_ms)?;
    // Interleave by block timestamp, the order blocks would arrive in.
    let mut all: Vec<&RawBlock> = streams.iter().flatten().collect();
    all.sort_by_key(|b| (b.acq_timestamp_ns + b.tick_count() as u64 * SAMPLE_PERIOD_NS, b.device_id));
    let mut chunks = Vec::new();
    for b in all {
        aligner.push(b)?;
        chunks.extend(aligner.poll());
    }
    Ok((chunks, aligner))
}
