use std::fmt::Write as _;

use super::PowerMode;
use crate::decoder::Prediction;
use crate::framing::DeviceLedger;

/// Linear-interpolated quantile of sorted values; `None` when empty.
pub fn percentile(sorted: &[u64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac)
}

fn quantile_ms(v: &[u64], q: f64) -> Option<f64> {
    let mut s = v.to_vec();
    s.sort_unstable();
    percentile(&s, q).map(|x| x / 1e6)
}

/// Lag and rate measurements of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub power_mode: PowerMode,
    pub model_count: usize,
    /// Input lag of every prediction, in production order.
    pub lags_ns: Vec<u64>,
    /// Time spent inside the inference call of every prediction.
    pub infer_ns: Vec<u64>,
    pub produced_ns: Vec<u64>,
    /// Raw data discarded by any stage.
    pub dropped_ms: f64,
}

impl LatencyReport {
    pub fn from_predictions(
        power_mode: PowerMode,
        model_count: usize,
        preds: &[Prediction],
        infer_ns: Vec<u64>,
        dropped_ms: f64,
    ) -> Self {
        Self {
            power_mode,
            model_count,
            lags_ns: preds.iter().map(Prediction::latency_ns).collect(),
            infer_ns,
            produced_ns: preds.iter().map(|p| p.produced_ns).collect(),
            dropped_ms,
        }
    }

    pub fn predictions(&self) -> usize {
        self.lags_ns.len()
    }

    pub fn median_lag_ms(&self) -> Option<f64> {
        quantile_ms(&self.lags_ns, 0.5)
    }

    pub fn p95_lag_ms(&self) -> Option<f64> {
        quantile_ms(&self.lags_ns, 0.95)
    }

    pub fn median_infer_ms(&self) -> Option<f64> {
        quantile_ms(&self.infer_ns, 0.5)
    }

    /// Predictions per second between the first and last prediction.
    pub fn throughput_hz(&self) -> f64 {
        let n = self.produced_ns.len();
        if n < 2 {
            return 0.0;
        }
        let first = self.produced_ns.iter().min().copied().unwrap_or(0);
        let last = self.produced_ns.iter().max().copied().unwrap_or(0);
        if last == first {
            return 0.0;
        }
        (n - 1) as f64 / ((last - first) as f64 / 1e9)
    }

    pub const CSV_HEADER: &'static str =
        "power_mode,models,predictions,median_lag_ms,p95_lag_ms,median_infer_ms,throughput_hz,dropped_ms";

    /// `None` for a run without predictions.
    pub fn csv_row(&self) -> Option<String> {
        Some(format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.1}",
            self.power_mode,
            self.model_count,
            self.predictions(),
            self.median_lag_ms()?,
            self.p95_lag_ms()?,
            self.median_infer_ms().unwrap_or(0.0),
            self.throughput_hz(),
            self.dropped_ms
        ))
    }
}

/// Benchmark table with one row per run that produced predictions.
pub fn measure(reports: &[LatencyReport]) -> String {
    let mut s = format!("{}\n", LatencyReport::CSV_HEADER);
    for r in reports {
        if let Some(row) = r.csv_row() {
            let _ = writeln!(s, "{row}");
        }
    }
    s
}

/// Where every aligned raw sample ended up, per channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineLedger {
    /// Samples handed over by the aligner.
    pub aligned: u64,
    pub processed: u64,
    /// Dropped by the freshest-data policy.
    pub discarded: u64,
    /// Dropped because the raw queue was full.
    pub overflow: u64,
    pub queued_at_end: u64,
    pub devices: Vec<(u8, DeviceLedger)>,
}

impl PipelineLedger {
    pub fn balances(&self) -> bool {
        self.aligned == self.processed + self.discarded + self.overflow + self.queued_at_end
            && self.devices.iter().all(|(_, l)| l.balances())
    }
}
