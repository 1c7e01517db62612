//! Three-stage real-time pipeline: acquisition, preprocessing and decoding,
//! with emulated compute budgets and latency instrumentation.

mod queue;
mod report;
mod run;
mod sink;
mod source;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use queue::{DiscardEvent, RawQueue};
pub use report::{measure, percentile, LatencyReport, PipelineLedger};
pub use run::{run, run_virtual, RunOutput};
pub use sink::{debug_record, DebugWriter, SinkStats};
pub use source::{bank_from_signal, Source};

use crate::error::{Error, Result};

/// Emulated board power profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PowerMode {
    FiveW,
    TenW,
}

impl PowerMode {
    pub fn worker_count(self) -> usize {
        match self {
            PowerMode::FiveW => 2,
            PowerMode::TenW => 4,
        }
    }

    /// Multiplier on every nominal compute cost.
    pub fn compute_scale(self) -> f64 {
        match self {
            PowerMode::FiveW => 2.0,
            PowerMode::TenW => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PowerMode::FiveW => "5W",
            PowerMode::TenW => "10W",
        }
    }
}

impl fmt::Display for PowerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PowerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "5w" | "5" | "fivew" => Ok(PowerMode::FiveW),
            "10w" | "10" | "tenw" => Ok(PowerMode::TenW),
            _ => Err(Error::Config(format!("unknown power mode `{s}` (use 5W or 10W)"))),
        }
    }
}

/// Where decoded predictions are mirrored for debugging.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum DebugSink {
    #[default]
    None,
    File(PathBuf),
    /// `host:port` of a listening TCP socket.
    Socket(String),
}

impl FromStr for DebugSink {
    type Err = Error;

    /// `none`, `file:PATH` or `tcp:HOST:PORT`.
    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() || s == "none" {
            Ok(DebugSink::None)
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(DebugSink::File(PathBuf::from(p)))
        } else if let Some(a) = s.strip_prefix("tcp:") {
            Ok(DebugSink::Socket(a.to_string()))
        } else {
            Err(Error::Config(format!("debug sink `{s}`: expected none, file:PATH or tcp:HOST:PORT")))
        }
    }
}

/// Nominal costs at scale 1.0, in ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputeCosts {
    /// Filtering one aligned chunk.
    pub chunk_ns: u64,
    /// Extracting one feature vector.
    pub vector_ns: u64,
    /// One model forward pass.
    pub model_ns: u64,
}

impl Default for ComputeCosts {
    fn default() -> Self {
        Self {
            chunk_ns: 250_000,
            vector_ns: 7_000_000,
            model_ns: 9_000_000,
        }
    }
}

/// Preprocessing pauses for `duration_ns` once the clock passes `at_ns`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stall {
    pub at_ns: u64,
    pub duration_ns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub power_mode: PowerMode,
    pub raw_queue_capacity_ms: u32,
    /// Backlog above this triggers the freshest-data policy.
    pub backlog_limit_ms: u32,
    /// Largest discard per policy event.
    pub max_discard_ms: u32,
    /// Largest discard per realignment of skewed devices.
    pub max_realign_ms: u32,
    /// Delay from a block's last sample to its arrival on the host.
    pub link_latency_ns: u64,
    pub costs: ComputeCosts,
    /// Blocks whose last sample falls after this are not acquired.
    pub duration_ns: u64,
    pub stall: Option<Stall>,
    pub debug_sink: DebugSink,
    pub hand_travel_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            power_mode: PowerMode::TenW,
            raw_queue_capacity_ms: 200,
            backlog_limit_ms: 20,
            max_discard_ms: 60,
            max_realign_ms: 60,
            // one 50-tick block at the device bit rate
            link_latency_ns: 5_000_000,
            costs: ComputeCosts::default(),
            duration_ns: 10_000_000_000,
            stall: None,
            debug_sink: DebugSink::None,
            hand_travel_s: crate::handctl::DEFAULT_TRAVEL_S,
        }
    }
}

impl PipelineConfig {
    pub fn new(power_mode: PowerMode, duration_ns: u64) -> Self {
        Self {
            power_mode,
            duration_ns,
            ..Self::default()
        }
    }

    pub fn worker_count(&self) -> usize {
        self.power_mode.worker_count()
    }

    pub fn compute_scale(&self) -> f64 {
        self.power_mode.compute_scale()
    }

    pub(crate) fn scaled(&self, nominal_ns: u64) -> u64 {
        (nominal_ns as f64 * self.compute_scale()).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.raw_queue_capacity_ms == 0 || self.backlog_limit_ms == 0 || self.max_discard_ms == 0 {
            return Err(Error::Config("queue capacity, backlog limit and discard bound must be positive".into()));
        }
        if self.backlog_limit_ms >= self.raw_queue_capacity_ms {
            return Err(Error::Config(format!(
                "backlog limit {} ms must be below the queue capacity {} ms",
                self.backlog_limit_ms, self.raw_queue_capacity_ms
            )));
        }
        if !(self.hand_travel_s > 0.0) {
            return Err(Error::Config("hand travel time must be positive".into()));
        }
        Ok(())
    }
}
