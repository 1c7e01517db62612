use std::collections::VecDeque;

use crate::framing::{AlignedChunk, SAMPLE_PERIOD_NS};

fn ms_to_samples(ms: u32) -> usize {
    (ms as u64 * 1_000_000 / SAMPLE_PERIOD_NS) as usize
}

fn samples_to_ms(n: u64) -> f64 {
    n as f64 * SAMPLE_PERIOD_NS as f64 / 1e6
}

/// Raw data dropped in one go, either by the freshest-data policy or by overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscardEvent {
    pub at_ns: u64,
    pub samples: u64,
    pub overflow: bool,
}

impl DiscardEvent {
    pub fn ms(&self) -> f64 {
        samples_to_ms(self.samples)
    }
}

/// FIFO of aligned chunks between acquisition and preprocessing.
///
/// Pushing never blocks: once the queue holds more than its capacity the
/// oldest chunks are dropped.
#[derive(Debug, Clone)]
pub struct RawQueue {
    chunks: VecDeque<AlignedChunk>,
    samples: usize,
    capacity: usize,
    overflow: u64,
}

impl RawQueue {
    pub fn new(capacity_ms: u32) -> Self {
        Self {
            chunks: VecDeque::new(),
            samples: 0,
            capacity: ms_to_samples(capacity_ms),
            overflow: 0,
        }
    }

    /// Returns the overflow drop, if any.
    pub fn push(&mut self, chunk: AlignedChunk, now_ns: u64) -> Option<DiscardEvent> {
        self.samples += chunk.len();
        self.chunks.push_back(chunk);
        let mut dropped = 0u64;
        while self.samples > self.capacity && self.chunks.len() > 1 {
            let c = self.chunks.pop_front().expect("non-empty");
            self.samples -= c.len();
            dropped += c.len() as u64;
        }
        self.overflow += dropped;
        (dropped > 0).then_some(DiscardEvent {
            at_ns: now_ns,
            samples: dropped,
            overflow: true,
        })
    }

    pub fn pop(&mut self) -> Option<AlignedChunk> {
        let c = self.chunks.pop_front()?;
        self.samples -= c.len();
        Some(c)
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn backlog_samples(&self) -> usize {
        self.samples
    }

    pub fn backlog_ms(&self) -> f64 {
        samples_to_ms(self.samples as u64)
    }

    /// Samples lost to overflow so far.
    pub fn overflow_samples(&self) -> u64 {
        self.overflow
    }

    /// Drops whole chunks from the front while the backlog exceeds
    /// `limit_ms`, never more than `max_ms` in one event.
    pub fn apply_freshest(&mut self, limit_ms: u32, max_ms: u32, now_ns: u64) -> Option<DiscardEvent> {
        let limit = ms_to_samples(limit_ms);
        let max = ms_to_samples(max_ms);
        let mut dropped = 0usize;
        while self.samples > limit {
            let next = self.chunks.front().map_or(0, AlignedChunk::len);
            if next == 0 || dropped + next > max {
                break;
            }
            self.pop();
            dropped += next;
        }
        (dropped > 0).then_some(DiscardEvent {
            at_ns: now_ns,
            samples: dropped as u64,
            overflow: false,
        })
    }
}
