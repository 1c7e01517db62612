//! One to five models, each owning a disjoint set of fingers, merged into a
//! single five-finger prediction per inference tick.

use std::fmt::Write as _;
use std::path::Path;

use crate::dsp::{Calibration, FeatureWindow};
use crate::error::{Error, Result};
use crate::model::{label_index, Checkpoint, ModelParams};
use crate::synthgen::FINGERS;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const MAX_MODELS: usize = 5;

/// A finger is active when its probability is strictly above `threshold`.
pub fn binarize(probs: &[f64; FINGERS], threshold: f64) -> [bool; FINGERS] {
    probs.map(|p| p > threshold)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probs: [f64; FINGERS],
    pub states: [bool; FINGERS],
    /// Acquisition time of the newest sample behind the input window.
    pub newest_sample_ns: u64,
    pub produced_ns: u64,
}

impl Prediction {
    pub fn new(probs: [f64; FINGERS], threshold: f64, newest_sample_ns: u64, produced_ns: u64) -> Self {
        Self {
            probs,
            states: binarize(&probs, threshold),
            newest_sample_ns,
            produced_ns,
        }
    }

    pub fn latency_ns(&self) -> u64 {
        self.produced_ns.saturating_sub(self.newest_sample_ns)
    }
}

/// Models with exclusive finger ownership and their shared preprocessing.
#[derive(Debug, Clone)]
pub struct Ensemble {
    models: Vec<ModelParams>,
    owner: [usize; FINGERS],
    pub threshold: f64,
    pub calibration: Option<Calibration>,
}

impl Ensemble {
    /// Every finger must be owned by exactly one model.
    pub fn new(models: Vec<ModelParams>, threshold: f64, calibration: Option<Calibration>) -> Result<Self> {
        if models.is_empty() || models.len() > MAX_MODELS {
            return Err(Error::Config(format!("{} models; an ensemble holds 1 to {MAX_MODELS}", models.len())));
        }
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
        }
        let mut owner = [usize::MAX; FINGERS];
        for (m, p) in models.iter().enumerate() {
            for f in p.config.owned() {
                if owner[f] != usize::MAX {
                    return Err(Error::Config(format!("finger {f} owned by models {} and {m}", owner[f])));
                }
                owner[f] = m;
            }
        }
        if let Some(f) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Config(format!("finger {f} has no owning model")));
        }
        let first = &models[0].config;
        if models
            .iter()
            .any(|m| m.config.input_channels != first.input_channels || m.config.seq_len != first.seq_len)
        {
            return Err(Error::Config("ensemble members disagree on input shape".into()));
        }
        if let Some(cal) = &calibration {
            if cal.standardizer.dim() != first.input_channels {
                return Err(Error::Config(format!(
                    "calibration for {} features, models take {}",
                    cal.standardizer.dim(),
                    first.input_channels
                )));
            }
        }
        Ok(Self {
            models,
            owner,
            threshold,
            calibration,
        })
    }

    /// Builds from checkpoints, which must carry identical preprocessing blocks.
    pub fn from_checkpoints(cks: Vec<Checkpoint>, threshold: f64) -> Result<Self> {
        let calibration = cks.first().and_then(|c| c.calibration.clone());
        if cks.iter().any(|c| c.calibration != calibration) {
            return Err(Error::Config("ensemble checkpoints carry different preprocessing blocks".into()));
        }
        Self::new(cks.into_iter().map(|c| c.params).collect(), threshold, calibration)
    }

    pub fn load<P: AsRef<Path>>(paths: &[P], threshold: f64) -> Result<Self> {
        let cks = paths.iter().map(Checkpoint::load).collect::<Result<Vec<_>>>()?;
        Self::from_checkpoints(cks, threshold)
    }

    pub fn models(&self) -> &[ModelParams] {
        &self.models
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn owner(&self, finger: usize) -> usize {
        self.owner[finger]
    }

    pub fn input_channels(&self) -> usize {
        self.models[0].config.input_channels
    }

    pub fn seq_len(&self) -> usize {
        self.models[0].config.seq_len
    }

    /// Runs each model and takes every finger from its owner.
    pub fn probs(&self, x: &[f64]) -> Result<[f64; FINGERS]> {
        let outs = self.models.iter().map(|m| m.forward(x)).collect::<Result<Vec<_>>>()?;
        Ok(std::array::from_fn(|f| outs[self.owner[f]][f]))
    }

    /// One inference tick on a full window; `clock` stamps completion.
    pub fn infer_tick(&self, window: &FeatureWindow, clock: impl FnOnce() -> u64) -> Result<Prediction> {
        if !window.is_full() || window.rows() != self.input_channels() || window.steps() != self.seq_len() {
            return Err(Error::Shape(format!(
                "window {}×{}/{} for a {}×{} ensemble",
                window.rows(),
                window.len(),
                window.steps(),
                self.input_channels(),
                self.seq_len()
            )));
        }
        let probs = self.probs(&window.to_time_major())?;
        Ok(Prediction::new(probs, self.threshold, window.newest_ns(), clock()))
    }
}

pub const PREDICTION_CSV_HEADER: &str = "t_ns,p1,p2,p3,p4,p5,s1,s2,s3,s4,s5,latency_ms";

pub fn prediction_csv_row(p: &Prediction) -> String {
    let mut s = p.newest_sample_ns.to_string();
    for v in p.probs {
        let _ = write!(s, ",{v:.6}");
    }
    for b in p.states {
        s.push_str(if b { ",1" } else { ",0" });
    }
    let _ = write!(s, ",{:.3}", p.latency_ns() as f64 / 1e6);
    s
}

pub fn predictions_to_csv(preds: &[Prediction]) -> String {
    let mut s = format!("{PREDICTION_CSV_HEADER}\n");
    for p in preds {
        s.push_str(&prediction_csv_row(p));
        s.push('\n');
    }
    s
}

/// Parses a prediction log. Produced times are rebuilt from the latency column.
pub fn parse_predictions_csv(text: &str) -> Result<Vec<Prediction>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == PREDICTION_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing prediction header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: n + 2, msg };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 12 {
            return Err(err(format!("{} columns, expected 12", cols.len())));
        }
        let t: u64 = cols[0].parse().map_err(|_| err(format!("bad t_ns `{}`", cols[0])))?;
        let mut probs = [0.0; FINGERS];
        for f in 0..FINGERS {
            probs[f] = cols[1 + f].parse().map_err(|_| err(format!("bad probability `{}`", cols[1 + f])))?;
        }
        let mut states = [false; FINGERS];
        for f in 0..FINGERS {
            states[f] = match cols[6 + f] {
                "1" => true,
                "0" => false,
                other => return Err(err(format!("bad state `{other}`"))),
            };
        }
        let lat: f64 = cols[11].parse().map_err(|_| err(format!("bad latency `{}`", cols[11])))?;
        out.push(Prediction {
            probs,
            states,
            newest_sample_ns: t,
            produced_ns: t + (lat * 1e6).round() as u64,
        });
    }
    Ok(out)
}

/// Pairs predictions with the label covering each one's newest sample;
/// predictions past the end of the labels are dropped.
pub fn align_with_labels(
    preds: &[Prediction],
    labels: &[[bool; FINGERS]],
) -> (Vec<[f64; FINGERS]>, Vec<[bool; FINGERS]>, Vec<[bool; FINGERS]>) {
    let mut probs = Vec::new();
    let mut states = Vec::new();
    let mut truth = Vec::new();
    for p in preds {
        if let Some(l) = labels.get(label_index(p.newest_sample_ns)) {
            probs.push(p.probs);
            states.push(p.states);
            truth.push(*l);
        }
    }
    (probs, states, truth)
}
