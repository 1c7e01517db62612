//! Dataset directories: one wire stream and one label table per session plus
//! a `key = value` manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{mask_bits, parse_mask, DatasetSplit, GestureSession, FINGERS, FINGER_NAMES, GLOVE_RATE_HZ};
use crate::error::{Error, Result};
use crate::framing::{align, encode_block, load_stream, replay_blocks, save_stream, CHANNELS, RAW_EXTENSION};

pub const MANIFEST: &str = "manifest.txt";
pub const FORMAT_VERSION: u32 = 1;
const BLOCK_TICKS: usize = 50;

/// A session read back from disk.
#[derive(Debug, Clone)]
pub struct StoredSession {
    pub index: usize,
    pub gesture: String,
    pub finger_mask: [bool; FINGERS],
    pub validation: bool,
    /// Channel-major ADC counts after decoding and alignment.
    pub signal: Vec<Vec<i16>>,
    pub labels: Vec<[bool; FINGERS]>,
    pub resyncs: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub manifest: BTreeMap<String, String>,
    pub sessions: Vec<StoredSession>,
}

impl DatasetDir {
    pub fn train(&self) -> impl Iterator<Item = &StoredSession> {
        self.sessions.iter().filter(|s| !s.validation)
    }

    pub fn validation(&self) -> impl Iterator<Item = &StoredSession> {
        self.sessions.iter().filter(|s| s.validation)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.manifest.get(key).map(String::as_str)
    }
}

fn session_stem(i: usize) -> String {
    format!("session_{i:03}")
}

/// Serializes both devices' samples as interleaved wire blocks.
pub fn session_stream(session: &GestureSession) -> Vec<u8> {
    let devices: Vec<Vec<[i16; CHANNELS]>> = (0..session.signal.len() / CHANNELS)
        .map(|d| session.device_ticks(d))
        .collect();
    let n = session.sample_count();
    let mut out = Vec::with_capacity(n * 2 * session.signal.len() + n / 10);
    for (k, start) in (0..n).step_by(BLOCK_TICKS).enumerate() {
        let end = (start + BLOCK_TICKS).min(n);
        for (d, ticks) in devices.iter().enumerate() {
            out.extend(encode_block(d as u8, k as u16, &ticks[start..end]).expect("block within limits"));
        }
    }
    out
}

pub fn labels_csv(labels: &[[bool; FINGERS]]) -> String {
    let mut s = format!("t_s,{}\n", FINGER_NAMES.join(","));
    for (j, row) in labels.iter().enumerate() {
        let _ = write!(s, "{:.6}", j as f64 / GLOVE_RATE_HZ);
        for &b in row {
            s.push_str(if b { ",1" } else { ",0" });
        }
        s.push('\n');
    }
    s
}

pub fn parse_labels_csv(text: &str) -> Result<Vec<[bool; FINGERS]>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != FINGERS + 1 {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("expected {} columns, found {}", FINGERS + 1, cols.len()),
            });
        }
        let mut row = [false; FINGERS];
        for (f, c) in cols[1..].iter().enumerate() {
            row[f] = match *c {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::Parse {
                        line: n + 1,
                        msg: format!("label `{other}` is not 0 or 1"),
                    })
                }
            };
        }
        out.push(row);
    }
    Ok(out)
}

pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: n + 1,
            msg: "expected `key = value`".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn join<T: std::fmt::Display>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes `split` to `dir`, returning the written paths.
pub fn write_dataset(dir: impl AsRef<Path>, split: &DatasetSplit) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let cfg = &split.config;
    let mut m = String::new();
    let _ = writeln!(m, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(m, "mode = {}", cfg.mode.name());
    let _ = writeln!(m, "seed = {}", cfg.seed);
    let _ = writeln!(m, "snr_db = {}", cfg.snr_db);
    let _ = writeln!(m, "posture_db = {}", cfg.posture_db);
    let _ = writeln!(m, "label_threshold = {}", cfg.label_threshold);
    let _ = writeln!(m, "adc_scale = {}", super::ADC_SCALE);
    let _ = writeln!(m, "signal_rate_hz = {}", super::SIGNAL_RATE_HZ);
    let _ = writeln!(m, "label_rate_hz = {GLOVE_RATE_HZ}");
    let _ = writeln!(m, "sessions_per_gesture = {}", cfg.sessions_per_gesture);
    for (c, row) in cfg.base_mixing().gains.iter().enumerate() {
        let _ = writeln!(m, "mixing.{c:02} = {}", join(row.iter().map(|g| format!("{g:.6}"))));
    }

    let mut written = Vec::new();
    let all = split
        .train_sessions
        .iter()
        .map(|s| (s, false))
        .chain(split.validation_sessions.iter().map(|s| (s, true)));
    let mut sessions: Vec<(&GestureSession, bool)> = all.collect();
    sessions.sort_by_key(|(s, _)| {
        let g = cfg.gestures.iter().position(|g| g == &s.gesture).unwrap_or(usize::MAX);
        (g, s.session_index)
    });
    let _ = writeln!(m, "sessions = {}", sessions.len());
    for (i, (s, val)) in sessions.iter().enumerate() {
        let stem = session_stem(i);
        let raw = dir.join(format!("{stem}.{RAW_EXTENSION}"));
        save_stream(&raw, &session_stream(s))?;
        let lab = dir.join(format!("{stem}.labels.csv"));
        fs::write(&lab, labels_csv(&s.labels()))?;
        written.push(raw);
        written.push(lab);
        let _ = writeln!(m, "{stem}.gesture = {}", s.gesture.name);
        let _ = writeln!(m, "{stem}.mask = {}", mask_bits(&s.gesture.finger_mask));
        let _ = writeln!(m, "{stem}.repetition_block = {}", s.session_index);
        let _ = writeln!(m, "{stem}.split = {}", if *val { "validation" } else { "train" });
        let _ = writeln!(m, "{stem}.seed = {}", s.seed);
        let _ = writeln!(m, "{stem}.channel_factors = {}", join(s.channel_factors.iter().map(|g| format!("{g:.6}"))));
    }
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, m)?;
    written.push(mpath);
    Ok(written)
}

/// Reads a dataset directory, decoding and aligning each session's stream.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<DatasetDir> {
    let dir = dir.as_ref();
    let manifest = parse_manifest(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let count: usize = manifest
        .get("sessions")
        .ok_or_else(|| Error::Format("manifest lacks `sessions`".into()))?
        .parse()
        .map_err(|_| Error::Format("bad `sessions` count".into()))?;
    let mut sessions = Vec::with_capacity(count);
    for i in 0..count {
        let stem = session_stem(i);
        let field = |k: &str| {
            manifest
                .get(&format!("{stem}.{k}"))
                .cloned()
                .ok_or_else(|| Error::Format(format!("manifest lacks `{stem}.{k}`")))
        };
        let bytes = load_stream(dir.join(format!("{stem}.{RAW_EXTENSION}")))?;
        let (streams, resyncs) = replay_blocks(&bytes);
        if streams.is_empty() {
            return Err(Error::Format(format!("{stem}: no decodable blocks")));
        }
        let (chunks, _) = align(&streams, crate::framing::align::DEFAULT_MAX_DROP_MS)?;
        let channels = chunks.first().map_or(0, |c| c.channel_count());
        let mut signal = vec![Vec::new(); channels];
        for c in &chunks {
            for (dst, src) in signal.iter_mut().zip(&c.samples) {
                dst.extend_from_slice(src);
            }
        }
        let labels = parse_labels_csv(&fs::read_to_string(dir.join(format!("{stem}.labels.csv")))?)?;
        sessions.push(StoredSession {
            index: i,
            gesture: field("gesture")?,
            finger_mask: parse_mask(&field("mask")?)?,
            validation: field("split")? == "validation",
            signal,
            labels,
            resyncs,
        });
    }
    Ok(DatasetDir { manifest, sessions })
}
