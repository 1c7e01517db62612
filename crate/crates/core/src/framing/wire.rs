//! Block wire format.
//!
//! ```text
//! magic(2) = C5 5C | device_id(1) | seq(2, LE) | tick_count(2, LE) | payload | crc16(2, LE)
//! ```
//!
//! The payload carries `tick_count` ticks of [`CHANNELS`] signed 16-bit
//! little-endian samples, channel-major within each tick. The CRC is
//! CRC-16/CCITT-FALSE over the `seq`, `tick_count` and payload bytes exactly
//! as they appear on the wire.

use crate::error::{Error, Result};

pub const MAGIC: [u8; 2] = [0xC5, 0x5C];
pub const CHANNELS: usize = 8;
pub const SAMPLE_RATE_HZ: u32 = 10_000;
pub const DEFAULT_TICKS: usize = 50;
/// Largest tick count the decoder accepts; anything above is treated as a corrupt header.
pub const MAX_TICKS: usize = 4096;

pub const HEADER_LEN: usize = 7;
pub const TRAILER_LEN: usize = 2;

/// Total bytes on the wire for a block of `ticks` ticks.
pub const fn block_len(ticks: usize) -> usize {
    HEADER_LEN + ticks * CHANNELS * 2 + TRAILER_LEN
}

const CRC_TABLE: [u16; 256] = {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no final xor).
pub fn crc16(bytes: &[u8]) -> u16 {
    bytes.iter().fold(0xFFFF, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}

/// One framed block from a device.
///
/// `acq_timestamp_ns` is not part of the wire format: the receiver stamps it
/// with the acquisition time of the first sample in the block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBlock {
    pub device_id: u8,
    pub seq: u16,
    /// Tick-major samples: `samples[tick * CHANNELS + channel]`.
    pub samples: Vec<i16>,
    pub crc: u16,
    pub acq_timestamp_ns: u64,
}

impl RawBlock {
    /// Builds a block and computes its CRC.
    pub fn new(device_id: u8, seq: u16, samples: Vec<i16>) -> Result<Self> {
        if samples.len() % CHANNELS != 0 {
            return Err(Error::Format(format!(
                "{} samples is not a whole number of {CHANNELS}-channel ticks",
                samples.len()
            )));
        }
        let ticks = samples.len() / CHANNELS;
        if ticks > MAX_TICKS {
            return Err(Error::Format(format!("{ticks} ticks exceeds the {MAX_TICKS} limit")));
        }
        let crc = crc_of(seq, &samples);
        Ok(Self {
            device_id,
            seq,
            samples,
            crc,
            acq_timestamp_ns: 0,
        })
    }

    pub fn tick_count(&self) -> usize {
        self.samples.len() / CHANNELS
    }

    pub fn sample(&self, tick: usize, channel: usize) -> i16 {
        self.samples[tick * CHANNELS + channel]
    }

    /// Serializes the block, using the stored CRC verbatim.
    pub fn to_bytes(&self) -> Vec<u8> {
        let ticks = self.tick_count() as u16;
        let mut out = Vec::with_capacity(block_len(self.tick_count()));
        out.extend_from_slice(&MAGIC);
        out.push(self.device_id);
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&ticks.to_le_bytes());
        for s in &self.samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&self.crc.to_le_bytes());
        out
    }
}

fn crc_of(seq: u16, samples: &[i16]) -> u16 {
    let mut body = Vec::with_capacity(4 + samples.len() * 2);
    body.extend_from_slice(&seq.to_le_bytes());
    body.extend_from_slice(&((samples.len() / CHANNELS) as u16).to_le_bytes());
    for s in samples {
        body.extend_from_slice(&s.to_le_bytes());
    }
    crc16(&body)
}

/// Encodes `ticks` rows of 8-channel samples into wire bytes.
pub fn encode_block(device_id: u8, seq: u16, ticks: &[[i16; CHANNELS]]) -> Result<Vec<u8>> {
    let samples = ticks.iter().flatten().copied().collect();
    Ok(RawBlock::new(device_id, seq, samples)?.to_bytes())
}

/// Something the stream decoder produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeEvent {
    Block(RawBlock),
    /// Bytes were discarded while searching for the next valid block.
    Resync { skipped: usize },
}

/// Incremental decoder for a byte stream of concatenated blocks.
///
/// Feed arbitrary slices with [`push`](Self::push); blocks are returned as soon
/// as they are complete and their CRC checks out. A block whose CRC fails but
/// whose declared length ends exactly at the next magic (or the end of the
/// stream) is skipped as one unit. Otherwise the decoder scans byte by byte for
/// the next magic, and all bytes skipped before the next good block are
/// reported as a single resync event.
#[derive(Debug, Default)]
pub struct StreamDecoder {
    buf: Vec<u8>,
    // bytes skipped since the last good block, not yet reported
    pending_skip: usize,
    resyncs: usize,
    blocks: usize,
}

enum Parse {
    Block(RawBlock, usize),
    BadBlock(usize),
    NeedMore,
    Bad,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn resync_count(&self) -> usize {
        self.resyncs
    }

    pub fn block_count(&self) -> usize {
        self.blocks
    }

    /// Appends bytes and returns every event they complete. Decoded blocks are
    /// stamped with `acq_timestamp_ns`.
    pub fn push(&mut self, bytes: &[u8], acq_timestamp_ns: u64) -> Vec<DecodeEvent> {
        self.buf.extend_from_slice(bytes);
        let mut events = Vec::new();
        let mut pos = 0;
        loop {
            match self.parse_at(pos, false) {
                Parse::Block(mut block, len) => {
                    self.flush_skip(&mut events);
                    block.acq_timestamp_ns = acq_timestamp_ns;
                    self.blocks += 1;
                    events.push(DecodeEvent::Block(block));
                    pos += len;
                }
                Parse::BadBlock(len) => {
                    self.pending_skip += len;
                    self.flush_skip(&mut events);
                    pos += len;
                }
                Parse::Bad => {
                    self.pending_skip += 1;
                    pos += 1;
                }
                Parse::NeedMore => break,
            }
        }
        self.buf.drain(..pos);
        events
    }

    /// Signals end of stream: any buffered partial block is reported as skipped.
    pub fn finish(&mut self) -> Vec<DecodeEvent> {
        let mut events = Vec::new();
        let mut pos = 0;
        while pos < self.buf.len() {
            match self.parse_at(pos, true) {
                Parse::BadBlock(len) => {
                    self.pending_skip += len;
                    self.flush_skip(&mut events);
                    pos += len;
                }
                Parse::Block(..) => unreachable!("complete blocks are consumed by push"),
                Parse::Bad | Parse::NeedMore => {
                    self.pending_skip += 1;
                    pos += 1;
                }
            }
        }
        self.buf.clear();
        self.flush_skip(&mut events);
        events
    }

    fn flush_skip(&mut self, events: &mut Vec<DecodeEvent>) {
        if self.pending_skip > 0 {
            events.push(DecodeEvent::Resync {
                skipped: self.pending_skip,
            });
            self.resyncs += 1;
            self.pending_skip = 0;
        }
    }

    fn parse_at(&self, pos: usize, at_end: bool) -> Parse {
        let rest = &self.buf[pos..];
        if rest.is_empty() {
            return Parse::NeedMore;
        }
        if rest[0] != MAGIC[0] {
            return Parse::Bad;
        }
        if rest.len() < 2 {
            return if at_end { Parse::Bad } else { Parse::NeedMore };
        }
        if rest[1] != MAGIC[1] {
            return Parse::Bad;
        }
        if rest.len() < HEADER_LEN {
            return if at_end { Parse::Bad } else { Parse::NeedMore };
        }
        let ticks = u16::from_le_bytes([rest[5], rest[6]]) as usize;
        if ticks > MAX_TICKS {
            return Parse::Bad;
        }
        let len = block_len(ticks);
        if rest.len() < len {
            return if at_end { Parse::Bad } else { Parse::NeedMore };
        }
        let body = &rest[3..len - TRAILER_LEN];
        let stored = u16::from_le_bytes([rest[len - 2], rest[len - 1]]);
        if crc16(body) == stored {
            let samples = rest[HEADER_LEN..len - TRAILER_LEN]
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
            let block = RawBlock {
                device_id: rest[2],
                seq: u16::from_le_bytes([rest[3], rest[4]]),
                samples,
                crc: stored,
                acq_timestamp_ns: 0,
            };
            return Parse::Block(block, len);
        }
        // A damaged block whose length is still trustworthy ends right where the
        // next block begins.
        let tail = &rest[len..];
        let boundary = if tail.len() >= 2 {
            tail[..2] == MAGIC
        } else {
            at_end && tail.is_empty()
        };
        if boundary {
            Parse::BadBlock(len)
        } else if !at_end && tail.len() < 2 {
            Parse::NeedMore
        } else {
            Parse::Bad
        }
    }
}

/// Decodes a complete byte sequence, returning blocks and resync events in order.
pub fn decode_stream(bytes: &[u8]) -> Vec<DecodeEvent> {
    let mut decoder = StreamDecoder::new();
    let mut events = decoder.push(bytes, 0);
    events.extend(decoder.finish());
    events
}
