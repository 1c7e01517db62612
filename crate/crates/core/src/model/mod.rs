//! Convolutional + GRU decoder: 1-D convolution over the feature sequence,
//! an encoder GRU, a decoder GRU read at its last step, and two linear layers
//! ending in per-finger sigmoids.

pub mod checkpoint;
pub mod config;
pub mod net;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{parameter_count, Block, Layout, ModelConfig, TrainSpec};
pub use net::{backward, sigmoid, Gradient, ModelParams, Sample, Trace};
pub use train::{evaluate, label_index, predict, train, Adam, EpochLog, PlateauScheduler, WindowSet};

use crate::dsp::{extract_sequence, Calibration};
use crate::error::Result;
use crate::synthgen::FINGERS;

/// Extracts calibrated features from labelled raw recordings and collects
/// every full `steps`-long window.
pub fn windows_from<'a>(
    cal: &Calibration,
    steps: usize,
    recordings: impl IntoIterator<Item = (&'a [Vec<i16>], &'a [[bool; FINGERS]])>,
) -> Result<WindowSet> {
    let mut set = WindowSet::new(steps, cal.standardizer.dim());
    for (signal, labels) in recordings {
        set.add_sequence(extract_sequence(cal, signal)?, labels)?;
    }
    Ok(set)
}
