//! Rolling feature matrix fed to the decoder.

use super::features::FeatureVector;
use crate::error::{Error, Result};

pub const DEFAULT_STEPS: usize = 50;

/// The most recent `steps` feature vectors. Pushing into a full window evicts
/// the oldest column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    rows: usize,
    steps: usize,
    // column-ring: columns[slot * rows .. (slot + 1) * rows]
    data: Vec<f64>,
    head: usize,
    len: usize,
    newest_ns: u64,
    newest_index: u64,
}

impl FeatureWindow {
    pub fn new(rows: usize, steps: usize) -> Self {
        Self {
            rows,
            steps,
            data: vec![0.0; rows * steps],
            head: 0,
            len: 0,
            newest_ns: 0,
            newest_index: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.steps
    }

    /// Acquisition time of the newest sample behind the newest column.
    pub fn newest_ns(&self) -> u64 {
        self.newest_ns
    }

    pub fn newest_sample_index(&self) -> u64 {
        self.newest_index
    }

    pub fn push(&mut self, v: &FeatureVector) -> Result<()> {
        self.push_values(&v.values, v.acq_timestamp_ns)?;
        self.newest_index = v.window_end_sample_index;
        Ok(())
    }

    pub fn push_values(&mut self, values: &[f64], acq_ns: u64) -> Result<()> {
        if values.len() != self.rows {
            return Err(Error::Shape(format!(
                "feature vector of {} values into a {}-row window",
                values.len(),
                self.rows
            )));
        }
        let slot = (self.head + self.len) % self.steps;
        self.data[slot * self.rows..(slot + 1) * self.rows].copy_from_slice(values);
        if self.len == self.steps {
            self.head = (self.head + 1) % self.steps;
        } else {
            self.len += 1;
        }
        self.newest_ns = acq_ns;
        Ok(())
    }

    /// Column `i`, oldest first.
    pub fn column(&self, i: usize) -> &[f64] {
        assert!(i < self.len, "column {i} of {}", self.len);
        let slot = (self.head + i) % self.steps;
        &self.data[slot * self.rows..(slot + 1) * self.rows]
    }

    /// Columns oldest to newest, concatenated (`[step][row]`), the decoder's input layout.
    pub fn to_time_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len * self.rows);
        for i in 0..self.len {
            out.extend_from_slice(self.column(i));
        }
        out
    }

    /// Row-major `rows × len` matrix (feature channel by time step).
    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| (0..self.len).map(|i| self.column(i)[r]).collect())
            .collect()
    }
}
