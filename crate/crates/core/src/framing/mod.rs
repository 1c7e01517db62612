//! Device byte streams: wire format, emulated devices and multi-device alignment.

pub mod align;
pub mod emulator;
pub mod wire;

use std::fs;
use std::path::Path;

pub use align::{align, AlignedChunk, Aligner, DeviceLedger, GapEvent, RealignEvent, SAMPLE_PERIOD_NS};
pub use emulator::{
    emulate_device, BufferSource, DeviceBank, DeviceConfig, DeviceEmulator, SampleSource, TimedBlock, ZeroSource,
};
pub use wire::{crc16, decode_stream, encode_block, DecodeEvent, RawBlock, StreamDecoder, CHANNELS};

use crate::error::Result;

/// Extension for recorded wire streams.
pub const RAW_EXTENSION: &str = "nrvraw";

/// Writes wire bytes verbatim.
pub fn save_stream(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(fs::read(path)?)
}

/// Decodes a recorded stream and restamps each device's blocks with nominal
/// acquisition times derived from its running sample count.
///
/// Returns one block list per device, in ascending device id order.
pub fn replay_blocks(bytes: &[u8]) -> (Vec<Vec<RawBlock>>, usize) {
    let mut per_device: Vec<Vec<RawBlock>> = Vec::new();
    let mut ids: Vec<u8> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut resyncs = 0;
    for ev in decode_stream(bytes) {
        match ev {
            DecodeEvent::Block(mut b) => {
                let k = match ids.iter().position(|&id| id == b.device_id) {
                    Some(k) => k,
                    None => {
                        ids.push(b.device_id);
                        per_device.push(Vec::new());
                        counts.push(0);
                        ids.len() - 1
                    }
                };
                b.acq_timestamp_ns = counts[k] * SAMPLE_PERIOD_NS;
                counts[k] += b.tick_count() as u64;
                per_device[k].push(b);
            }
            DecodeEvent::Resync { .. } => resyncs += 1,
        }
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&k| ids[k]);
    let mut slots: Vec<Option<Vec<RawBlock>>> = per_device.into_iter().map(Some).collect();
    let sorted = order.into_iter().map(|k| slots[k].take().expect("each index once")).collect();
    (sorted, resyncs)
}
