//! Synthetic nerve recordings with known per-finger ground truth.
//!
//! Each channel is amplitude-modulated band-limited noise: the per-finger
//! intent envelopes, mixed through a seed-determined gain matrix, scale a
//! 25–600 Hz carrier, and broadband noise is added on top. Sessions are
//! grouped into a training/validation split where the chronologically last
//! session of every gesture is held out.

mod io;

pub use io::{labels_csv, parse_labels_csv, read_dataset, session_stream, write_dataset, DatasetDir, StoredSession};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::{design_butterworth, FilterSpec, Sos, SosFilter};
use crate::error::{Error, Result};
use crate::framing::CHANNELS;

pub const FINGERS: usize = 5;
pub const FINGER_NAMES: [&str; FINGERS] = ["thumb", "index", "middle", "ring", "pinky"];
pub const SIGNAL_RATE_HZ: f64 = 10_000.0;
pub const GLOVE_RATE_HZ: f64 = 50.0;
pub const SIGNAL_CHANNELS: usize = 2 * CHANNELS;
/// ADC counts per unit of synthetic signal amplitude.
pub const ADC_SCALE: f64 = 2000.0;
pub const DEFAULT_LABEL_THRESHOLD: f64 = 0.5;
pub const RAMP_S: f64 = 0.3;

const GLOVE_DECIMATION: usize = (SIGNAL_RATE_HZ / GLOVE_RATE_HZ) as usize;

/// A hand gesture, as the set of flexed fingers.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSpec {
    pub name: String,
    pub finger_mask: [bool; FINGERS],
    pub repetitions: usize,
    pub hold_s: f64,
}

impl GestureSpec {
    pub fn new(name: impl Into<String>, finger_mask: [bool; FINGERS]) -> Self {
        Self {
            name: name.into(),
            finger_mask,
            repetitions: 10,
            hold_s: 2.0,
        }
    }

    /// Parses a thumb-first bit string such as `"11000"`.
    pub fn from_bits(name: impl Into<String>, bits: &str) -> Result<Self> {
        let mask = parse_mask(bits)?;
        let g = Self::new(name, mask);
        g.validate()?;
        Ok(g)
    }

    pub fn single_finger(finger: usize) -> Self {
        let mut mask = [false; FINGERS];
        mask[finger] = true;
        Self::new(FINGER_NAMES[finger], mask)
    }

    pub fn mask_bits(&self) -> String {
        mask_bits(&self.finger_mask)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.finger_mask.iter().any(|&b| b) {
            return Err(Error::Config(format!("gesture `{}` flexes no finger", self.name)));
        }
        if self.repetitions == 0 {
            return Err(Error::Config(format!("gesture `{}` has zero repetitions", self.name)));
        }
        if !(self.hold_s > 0.0) {
            return Err(Error::Config(format!("gesture `{}` hold must be positive", self.name)));
        }
        Ok(())
    }
}

pub fn parse_mask(bits: &str) -> Result<[bool; FINGERS]> {
    let bytes = bits.as_bytes();
    if bytes.len() != FINGERS || bytes.iter().any(|b| *b != b'0' && *b != b'1') {
        return Err(Error::Config(format!("finger mask `{bits}` must be five 0/1 digits")));
    }
    Ok(std::array::from_fn(|i| bytes[i] == b'1'))
}

pub fn mask_bits(mask: &[bool; FINGERS]) -> String {
    mask.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Single-finger flexions followed by the multi-finger gestures.
pub fn default_gestures() -> Vec<GestureSpec> {
    let mut g: Vec<GestureSpec> = (0..FINGERS).map(GestureSpec::single_finger).collect();
    for (name, bits) in [
        ("fist", "11111"),
        ("index_pinch", "11000"),
        ("pointing", "10111"),
        ("hook_em", "10110"),
    ] {
        g.push(GestureSpec::from_bits(name, bits).expect("valid preset"));
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Two informative nerve groups on the first device; the second device records noise only.
    Able,
    /// All sixteen channels informative, lower SNR.
    Amputee,
}

impl Mode {
    pub fn default_snr_db(self) -> f64 {
        match self {
            Mode::Able => 20.0,
            Mode::Amputee => 10.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Able => "able",
            Mode::Amputee => "amputee",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "able" => Ok(Mode::Able),
            "amputee" => Ok(Mode::Amputee),
            other => Err(Error::Config(format!("unknown mode `{other}` (expected able or amputee)"))),
        }
    }
}

/// Derives independent sub-seeds (splitmix64 over the inputs).
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed;
    for &p in std::iter::once(&0x5EED).chain(parts) {
        x ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

/// Per-finger intent envelopes at [`SIGNAL_RATE_HZ`].
#[derive(Debug, Clone, PartialEq)]
pub struct Intents {
    pub env: [Vec<f64>; FINGERS],
}

impl Intents {
    pub fn len(&self) -> usize {
        self.env[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            env: std::array::from_fn(|_| vec![0.0; n]),
        }
    }

    /// Normalized joint angles sampled at the glove rate.
    pub fn glove(&self) -> Vec<[f64; FINGERS]> {
        (0..self.len() / GLOVE_DECIMATION)
            .map(|j| std::array::from_fn(|f| self.env[f][j * GLOVE_DECIMATION]))
            .collect()
    }
}

/// Trapezoidal flex envelopes: `RAMP_S` rise, `hold_s` plateau at 1, `RAMP_S`
/// fall, with 1–2 s of rest before, between and after repetitions.
pub fn synth_intent(spec: &GestureSpec, seed: u64) -> Result<Intents> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ramp = (RAMP_S * SIGNAL_RATE_HZ).round() as usize;
    let hold = (spec.hold_s * SIGNAL_RATE_HZ).round() as usize;
    let mut rest = || (rng.gen_range(1.0..2.0) * SIGNAL_RATE_HZ).round() as usize;
    let mut shape = Vec::new();
    shape.resize(rest(), 0.0);
    for _ in 0..spec.repetitions {
        shape.extend((0..ramp).map(|i| i as f64 / ramp as f64));
        shape.resize(shape.len() + hold, 1.0);
        shape.extend((0..ramp).map(|i| 1.0 - (i + 1) as f64 / ramp as f64));
        let r = rest();
        shape.resize(shape.len() + r, 0.0);
    }
    let n = shape.len();
    Ok(Intents {
        env: std::array::from_fn(|f| if spec.finger_mask[f] { shape.clone() } else { vec![0.0; n] }),
    })
}

/// Channel-by-finger gain matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixing {
    pub gains: Vec<[f64; FINGERS]>,
}

impl Mixing {
    /// Seed-determined gains. In able mode channels 0–3 pick up the median-nerve
    /// fingers (thumb, index, middle), channels 4–7 the ulnar fingers (ring,
    /// pinky), and the second device nothing. In amputee mode every channel has
    /// one dominant finger and weaker crosstalk from the rest.
    pub fn generate(mode: Mode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gains = vec![[0.0; FINGERS]; SIGNAL_CHANNELS];
        match mode {
            Mode::Able => {
                for (c, row) in gains.iter_mut().enumerate().take(CHANNELS) {
                    let (group, dominant): (&[usize], usize) = if c < 4 { (&[0, 1, 2], c % 3) } else { (&[3, 4], 3 + c % 2) };
                    for &f in group {
                        row[f] = if f == dominant { rng.gen_range(0.7..1.0) } else { rng.gen_range(0.1..0.4) };
                    }
                }
            }
            Mode::Amputee => {
                for (c, row) in gains.iter_mut().enumerate() {
                    for (f, g) in row.iter_mut().enumerate() {
                        *g = if f == c % FINGERS { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.3) };
                    }
                }
            }
        }
        Self { gains }
    }

    /// Scales each channel by `10^(u/20)`, `u` uniform in ±`db`.
    pub fn perturbed(&self, db: f64, seed: u64) -> (Self, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors: Vec<f64> = self
            .gains
            .iter()
            .map(|_| 10f64.powf(rng.gen_range(-db..=db) / 20.0))
            .collect();
        let gains = self
            .gains
            .iter()
            .zip(&factors)
            .map(|(row, k)| row.map(|g| g * k))
            .collect();
        (Self { gains }, factors)
    }
}

/// A synthesized 16-channel recording.
#[derive(Debug, Clone)]
pub struct SynthSignal {
    /// Channel-major, in signal units (multiply by [`ADC_SCALE`] for counts).
    pub channels: Vec<Vec<f64>>,
    pub mixing: Mixing,
}

impl SynthSignal {
    pub fn quantize(&self) -> Vec<Vec<i16>> {
        self.channels.iter().map(|c| quantize(c)).collect()
    }
}

pub fn quantize(x: &[f64]) -> Vec<i16> {
    x.iter()
        .map(|v| (v * ADC_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16)
        .collect()
}

fn unit_power_filter(spec: &FilterSpec) -> (Sos, f64) {
    let sos = design_butterworth(spec).expect("fixed valid design");
    let mut f = SosFilter::new(sos.clone(), 1);
    let mut energy = 0.0;
    for n in 0..(SIGNAL_RATE_HZ as usize * 5) {
        let h = f.process_sample(0, if n == 0 { 1.0 } else { 0.0 });
        energy += h * h;
    }
    (sos, 1.0 / energy.sqrt())
}

/// Synthesizes a recording with a mixing matrix drawn from `seed`.
pub fn synth_signal(intents: &Intents, mode: Mode, snr_db: f64, seed: u64) -> SynthSignal {
    let mixing = Mixing::generate(mode, derive_seed(seed, &[1]));
    synth_signal_with(intents, &mixing, snr_db, derive_seed(seed, &[2]))
}

/// `x_c(t) = Σ_f G[c][f] · intent_f(t) · carrier_c(t) + σ · noise_c(t)` with unit-power
/// 25–600 Hz carriers, unit-power noise band-limited to 3 kHz and
/// `σ = 10^(−snr_db/20)`.
pub fn synth_signal_with(intents: &Intents, mixing: &Mixing, snr_db: f64, seed: u64) -> SynthSignal {
    let (carrier_sos, carrier_norm) = unit_power_filter(&FilterSpec::bandpass(4, 25.0, 600.0, SIGNAL_RATE_HZ));
    let (noise_sos, noise_norm) = unit_power_filter(&FilterSpec::lowpass(2, 3000.0, SIGNAL_RATE_HZ));
    let sigma = 10f64.powf(-snr_db / 20.0);
    let n = intents.len();
    let channels = mixing
        .gains
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
            let mut carrier = SosFilter::new(carrier_sos.clone(), 1);
            let mut noise = SosFilter::new(noise_sos.clone(), 1);
            (0..n)
                .map(|t| {
                    let a: f64 = (0..FINGERS).map(|f| row[f] * intents.env[f][t]).sum();
                    let cw: f64 = rng.sample(StandardNormal);
                    let nw: f64 = rng.sample(StandardNormal);
                    let carrier = carrier.process_sample(0, cw) * carrier_norm;
                    a * carrier + sigma * noise.process_sample(0, nw) * noise_norm
                })
                .collect()
        })
        .collect();
    SynthSignal {
        channels,
        mixing: mixing.clone(),
    }
}

/// One labelled recording of a gesture repeated `repetitions` times.
#[derive(Debug, Clone)]
pub struct GestureSession {
    pub gesture: GestureSpec,
    /// Chronological position of this session among the gesture's sessions.
    pub session_index: usize,
    pub mode: Mode,
    /// Channel-major ADC counts at 10 kHz.
    pub signal: Vec<Vec<i16>>,
    /// Normalized joint angles in [0, 1] at 50 Hz.
    pub glove_angle: Vec<[f64; FINGERS]>,
    pub label_threshold: f64,
    pub seed: u64,
    /// Per-channel gain perturbation applied for this session.
    pub channel_factors: Vec<f64>,
}

impl GestureSession {
    pub fn labels(&self) -> Vec<[bool; FINGERS]> {
        self.glove_angle
            .iter()
            .map(|a| a.map(|v| v > self.label_threshold))
            .collect()
    }

    pub fn sample_count(&self) -> usize {
        self.signal.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.sample_count() as f64 / SIGNAL_RATE_HZ
    }

    /// Ticks of 8 channels for device `device` (0 or 1).
    pub fn device_ticks(&self, device: usize) -> Vec<[i16; CHANNELS]> {
        let base = device * CHANNELS;
        (0..self.sample_count())
            .map(|t| std::array::from_fn(|c| self.signal[base + c][t]))
            .collect()
    }
}

/// Configuration of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub gestures: Vec<GestureSpec>,
    pub sessions_per_gesture: usize,
    pub mode: Mode,
    pub snr_db: f64,
    pub seed: u64,
    /// Per-session, per-channel gain perturbation in ±dB.
    pub posture_db: f64,
    pub label_threshold: f64,
}

impl DatasetConfig {
    pub fn new(gestures: Vec<GestureSpec>, sessions_per_gesture: usize, mode: Mode, seed: u64) -> Self {
        Self {
            gestures,
            sessions_per_gesture,
            mode,
            snr_db: mode.default_snr_db(),
            seed,
            posture_db: 3.0,
            label_threshold: DEFAULT_LABEL_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gestures.is_empty() {
            return Err(Error::Config("no gestures".into()));
        }
        if self.sessions_per_gesture < 4 {
            return Err(Error::Config(format!(
                "{} sessions per gesture; at least 4 are required",
                self.sessions_per_gesture
            )));
        }
        for g in &self.gestures {
            g.validate()?;
        }
        Ok(())
    }

    pub fn base_mixing(&self) -> Mixing {
        Mixing::generate(self.mode, derive_seed(self.seed, &[1]))
    }

    /// Generates session `session` of gesture `gesture`.
    pub fn session(&self, gesture: usize, session: usize) -> Result<GestureSession> {
        let spec = &self.gestures[gesture];
        let seed = derive_seed(self.seed, &[2, gesture as u64, session as u64]);
        let intents = synth_intent(spec, derive_seed(seed, &[0]))?;
        let (mixing, factors) = self.base_mixing().perturbed(self.posture_db, derive_seed(seed, &[1]));
        let sig = synth_signal_with(&intents, &mixing, self.snr_db, derive_seed(seed, &[2]));
        Ok(GestureSession {
            gesture: spec.clone(),
            session_index: session,
            mode: self.mode,
            signal: sig.quantize(),
            glove_angle: intents.glove(),
            label_threshold: self.label_threshold,
            seed,
            channel_factors: factors,
        })
    }
}

/// Sessions split into training and held-out validation.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub config: DatasetConfig,
    pub train_sessions: Vec<GestureSession>,
    pub validation_sessions: Vec<GestureSession>,
}

impl DatasetSplit {
    /// Training share of all label samples.
    pub fn train_fraction(&self) -> f64 {
        let count = |s: &[GestureSession]| s.iter().map(|x| x.glove_angle.len()).sum::<usize>() as f64;
        let t = count(&self.train_sessions);
        t / (t + count(&self.validation_sessions))
    }
}

/// Builds the full dataset; the last session of each gesture goes to validation.
pub fn build_dataset(config: &DatasetConfig) -> Result<DatasetSplit> {
    config.validate()?;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for g in 0..config.gestures.len() {
        for s in 0..config.sessions_per_gesture {
            let session = config.session(g, s)?;
            if s + 1 == config.sessions_per_gesture {
                validation.push(session);
            } else {
                train.push(session);
            }
        }
    }
    Ok(DatasetSplit {
        config: config.clone(),
        train_sessions: train,
        validation_sessions: validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_parsing() {
        assert_eq!(parse_mask("11000").unwrap(), [true, true, false, false, false]);
        assert!(parse_mask("1100").is_err());
        assert!(parse_mask("11a00").is_err());
        assert!(GestureSpec::from_bits("none", "00000").is_err());
    }

    #[test]
    fn default_set_contains_multi_finger_gestures() {
        let bits: Vec<String> = default_gestures().iter().map(GestureSpec::mask_bits).collect();
        for want in ["11111", "11000", "10111", "10110"] {
            assert!(bits.iter().any(|b| b == want), "{want}");
        }
    }

    #[test]
    fn fist_envelopes_identical() {
        let mut g = GestureSpec::from_bits("fist", "11111").unwrap();
        g.repetitions = 1;
        let i = synth_intent(&g, 4).unwrap();
        for f in 1..FINGERS {
            assert_eq!(i.env[f], i.env[0]);
        }
        assert!(i.env[0].iter().any(|&v| v == 1.0));
    }

    #[test]
    fn unflexed_finger_stays_zero() {
        let g = GestureSpec::from_bits("pointing", "10111").unwrap();
        let i = synth_intent(&g, 4).unwrap();
        assert!(i.env[1].iter().all(|&v| v == 0.0));
        assert!(i.env[0].iter().any(|&v| v > 0.0));
    }

    #[test]
    fn seeds_are_independent() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(7, &[3, 4]), derive_seed(7, &[3, 4]));
    }

    #[test]
    fn too_few_sessions_rejected() {
        let cfg = DatasetConfig::new(vec![GestureSpec::single_finger(0)], 3, Mode::Able, 0);
        assert!(build_dataset(&cfg).is_err());
    }
}
