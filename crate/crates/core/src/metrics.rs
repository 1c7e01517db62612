//! Per-finger classification metrics: confusion counts, sensitivity,
//! specificity, accuracy and rank-based AUC.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::synthgen::{FINGERS, FINGER_NAMES};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, pred: bool, label: bool) {
        match (pred, label) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Sensitivity, specificity and accuracy. A rate with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn rates(c: &ConfusionCounts) -> Rates {
    Rates {
        tpr: ratio(c.tp, c.tp + c.fn_),
        tnr: ratio(c.tn, c.tn + c.fp),
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

/// Counts for one finger.
pub fn confusion(preds: &[bool], labels: &[bool]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &l) in preds.iter().zip(labels) {
        c.add(p, l);
    }
    Ok(c)
}

/// Counts for all five fingers.
pub fn confusion_per_finger(preds: &[[bool; FINGERS]], labels: &[[bool; FINGERS]]) -> Result<[ConfusionCounts; FINGERS]> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut out = [ConfusionCounts::default(); FINGERS];
    for (p, l) in preds.iter().zip(labels) {
        for f in 0..FINGERS {
            out[f].add(p[f], l[f]);
        }
    }
    Ok(out)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via average ranks. `None` unless both classes occur.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Shape("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerMetrics {
    pub counts: ConfusionCounts,
    pub rates: Rates,
    pub auc: Option<f64>,
}

/// Per-finger table in the order thumb … pinky.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub fingers: [FingerMetrics; FINGERS],
}

impl Report {
    pub const CSV_HEADER: &'static str = "finger,tpr,tnr,accuracy,auc,tp,tn,fp,fn";

    pub fn from_scores(probs: &[[f64; FINGERS]], states: &[[bool; FINGERS]], labels: &[[bool; FINGERS]]) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::Shape(format!("{} predictions for {} labels", probs.len(), labels.len())));
        }
        let counts = confusion_per_finger(states, labels)?;
        let mut fingers = [FingerMetrics {
            counts: ConfusionCounts::default(),
            rates: rates(&ConfusionCounts::default()),
            auc: None,
        }; FINGERS];
        for f in 0..FINGERS {
            let s: Vec<f64> = probs.iter().map(|p| p[f]).collect();
            let l: Vec<bool> = labels.iter().map(|l| l[f]).collect();
            fingers[f] = FingerMetrics {
                counts: counts[f],
                rates: rates(&counts[f]),
                auc: auc(&s, &l)?,
            };
        }
        Ok(Self { fingers })
    }

    /// Undefined values are written as empty fields.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for (f, m) in self.fingers.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                FINGER_NAMES[f],
                opt(m.rates.tpr),
                opt(m.rates.tnr),
                opt(m.rates.accuracy),
                opt(m.auc),
                m.counts.tp,
                m.counts.tn,
                m.counts.fp,
                m.counts.fn_
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("   n/a".to_string(), |v| format!("{:6.2}", 100.0 * v));
        let mut s = format!("{:<8}{:>8}{:>8}{:>8}{:>8}\n", "finger", "TPR%", "TNR%", "Acc%", "AUC%");
        for (f, m) in self.fingers.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<8}  {}  {}  {}  {}",
                FINGER_NAMES[f],
                opt(m.rates.tpr),
                opt(m.rates.tnr),
                opt(m.rates.accuracy),
                opt(m.auc)
            );
        }
        s
    }

    /// Parses [`Report::to_csv`] output back into rows of optional numbers.
    pub fn parse_csv(text: &str) -> Result<Vec<(String, [Option<f64>; 4])>> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(Error::Parse {
                line: 1,
                msg: "missing report header".into(),
            });
        }
        lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, line)| {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != 9 {
                    return Err(Error::Parse {
                        line: n + 2,
                        msg: format!("{} columns", cols.len()),
                    });
                }
                let mut vals = [None; 4];
                for (v, c) in vals.iter_mut().zip(&cols[1..5]) {
                    if !c.is_empty() {
                        *v = Some(c.parse().map_err(|_| Error::Parse {
                            line: n + 2,
                            msg: format!("`{c}` is not a number"),
                        })?);
                    }
                }
                Ok((cols[0].to_string(), vals))
            })
            .collect()
    }
}
