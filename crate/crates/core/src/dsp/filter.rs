//! Butterworth IIR design and streaming second-order sections.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lowpass,
    Bandpass,
}

/// What to design. `order` is the order of the resulting digital filter, so a
/// 4th-order bandpass is two biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoffs_hz: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Self {
        Self {
            kind: FilterKind::Lowpass,
            order,
            cutoffs_hz: vec![cutoff_hz],
            sample_rate_hz,
        }
    }

    pub fn bandpass(order: usize, low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Self {
        Self {
            kind: FilterKind::Bandpass,
            order,
            cutoffs_hz: vec![low_hz, high_hz],
            sample_rate_hz,
        }
    }

    fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate_hz / 2.0;
        if self.order == 0 || self.order % 2 != 0 {
            return Err(Error::Config(format!("filter order {} must be even and positive", self.order)));
        }
        let expected = match self.kind {
            FilterKind::Lowpass => 1,
            FilterKind::Bandpass => 2,
        };
        if self.cutoffs_hz.len() != expected {
            return Err(Error::Config(format!(
                "{:?} needs {expected} cutoff(s), got {}",
                self.kind,
                self.cutoffs_hz.len()
            )));
        }
        if self.cutoffs_hz.iter().any(|&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::Config(format!(
                "cutoffs {:?} Hz must lie strictly inside (0, {nyquist}) Hz",
                self.cutoffs_hz
            )));
        }
        if self.kind == FilterKind::Bandpass && self.cutoffs_hz[0] >= self.cutoffs_hz[1] {
            return Err(Error::Config("bandpass low cutoff must be below high cutoff".into()));
        }
        Ok(())
    }
}

/// One section `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is always 1.
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (self.a[0] + self.a[1] * z_inv + self.a[2] * z2)
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let a1 = Complex64::new(self.a[1], 0.0);
        let disc = (a1 * a1 - 4.0 * self.a[2]).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub sample_rate_hz: f64,
}

impl Sos {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    pub fn order(&self) -> usize {
        self.sections.len() * 2
    }
}

impl fmt::Display for Sos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# fs = {} Hz, {} sections", self.sample_rate_hz, self.sections.len())?;
        writeln!(f, "b0,b1,b2,a0,a1,a2")?;
        for s in &self.sections {
            writeln!(
                f,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                s.b[0], s.b[1], s.b[2], s.a[0], s.a[1], s.a[2]
            )?;
        }
        Ok(())
    }
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    (2.0 * fs + s) / (2.0 * fs - s)
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

/// Left-half-plane poles of the unit-cutoff analog Butterworth prototype.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

// Groups digital poles into conjugate pairs (or pairs of real poles).
fn pair_poles(poles: &[Complex64]) -> Vec<[f64; 3]> {
    const EPS: f64 = 1e-12;
    let mut upper: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > EPS).collect();
    upper.sort_by(|a, b| a.arg().partial_cmp(&b.arg()).expect("finite poles"));
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= EPS).map(|p| p.re).collect();
    real.sort_by(|a, b| a.partial_cmp(b).expect("finite poles"));
    let mut out: Vec<[f64; 3]> = upper.iter().map(|p| [1.0, -2.0 * p.re, p.norm_sqr()]).collect();
    for pair in real.chunks(2) {
        match *pair {
            [r1, r2] => out.push([1.0, -(r1 + r2), r1 * r2]),
            [r] => out.push([1.0, -r, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

/// Designs a digital Butterworth filter by bilinear transform with prewarped
/// cutoffs, so the magnitude is exactly −3 dB at every cutoff.
pub fn design_butterworth(spec: &FilterSpec) -> Result<Sos> {
    spec.validate()?;
    let fs = spec.sample_rate_hz;
    let sections = match spec.kind {
        FilterKind::Lowpass => {
            let wc = prewarp(spec.cutoffs_hz[0], fs);
            let poles: Vec<Complex64> = prototype_poles(spec.order)
                .into_iter()
                .map(|p| bilinear(p * wc, fs))
                .collect();
            pair_poles(&poles)
                .into_iter()
                .map(|a| {
                    // Zeros at z = -1; unity gain at DC per section.
                    let g = (a[0] + a[1] + a[2]) / 4.0;
                    Biquad {
                        b: [g, 2.0 * g, g],
                        a,
                    }
                })
                .collect::<Vec<_>>()
        }
        FilterKind::Bandpass => {
            let w1 = prewarp(spec.cutoffs_hz[0], fs);
            let w2 = prewarp(spec.cutoffs_hz[1], fs);
            let bw = w2 - w1;
            let w0sq = w1 * w2;
            let mut poles = Vec::with_capacity(spec.order);
            for p in prototype_poles(spec.order / 2) {
                let pb = p * bw;
                let disc = (pb * pb - 4.0 * w0sq).sqrt();
                poles.push(bilinear((pb + disc) / 2.0, fs));
                poles.push(bilinear((pb - disc) / 2.0, fs));
            }
            let mut sections: Vec<Biquad> = pair_poles(&poles)
                .into_iter()
                .map(|a| Biquad { b: [1.0, 0.0, -1.0], a })
                .collect();
            // Unity gain at the centre frequency, where the analog response is exactly 1.
            let w_center = 2.0 * (w0sq.sqrt() / (2.0 * fs)).atan();
            let z_inv = Complex64::from_polar(1.0, -w_center);
            let gain: f64 = sections.iter().map(|s| s.response(z_inv)).product::<Complex64>().norm();
            let per_section = gain.powf(-1.0 / sections.len() as f64);
            for s in &mut sections {
                for b in &mut s.b {
                    *b *= per_section;
                }
            }
            sections
        }
    };
    Ok(Sos {
        sections,
        sample_rate_hz: fs,
    })
}

/// A multichannel streaming realization of an [`Sos`] cascade
/// (transposed direct form II, one pair of delay registers per section and channel).
#[derive(Debug, Clone)]
pub struct SosFilter {
    sos: Sos,
    state: Vec<[f64; 2]>,
    channels: usize,
}

impl SosFilter {
    pub fn new(sos: Sos, channels: usize) -> Self {
        let n = sos.sections.len();
        Self {
            sos,
            state: vec![[0.0; 2]; n * channels],
            channels,
        }
    }

    pub fn sos(&self) -> &Sos {
        &self.sos
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = [0.0; 2]);
    }

    #[inline]
    pub fn process_sample(&mut self, channel: usize, x: f64) -> f64 {
        let n = self.sos.sections.len();
        let state = &mut self.state[channel * n..(channel + 1) * n];
        let mut v = x;
        for (s, st) in self.sos.sections.iter().zip(state) {
            let y = s.b[0] * v + st[0];
            st[0] = s.b[1] * v - s.a[1] * y + st[1];
            st[1] = s.b[2] * v - s.a[2] * y;
            v = y;
        }
        v
    }

    /// Filters one channel's samples in place.
    pub fn process_channel(&mut self, channel: usize, samples: &mut [f64]) {
        for x in samples {
            *x = self.process_sample(channel, *x);
        }
    }
}
