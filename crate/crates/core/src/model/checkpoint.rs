//! Checkpoint files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "NHCK" | version u32
//! config: input_channels, seq_len, conv_out, conv_kernel, gru_hidden,
//!         linear_hidden, outputs (u32 each) | dropout_p f64 | finger mask u8 (bit f = finger f)
//! preprocessing: gain count u32, gains f64… | feature count u32, means f64…, scales f64…
//! params: count u64 | f64… in block order (conv, encoder, decoder, linear1, linear2)
//! ```
//!
//! A preprocessing block with zero counts means "uncalibrated".

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::net::ModelParams;
use crate::dsp::{Calibration, Standardizer};
use crate::error::{Error, Result};
use crate::synthgen::FINGERS;

pub const MAGIC: &[u8; 4] = b"NHCK";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "nhck";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub calibration: Option<Calibration>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.params.config;
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            c.input_channels,
            c.seq_len,
            c.conv_out,
            c.conv_kernel,
            c.gru_hidden,
            c.linear_hidden,
            c.outputs,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&c.dropout_p.to_le_bytes());
        let mask = (0..FINGERS).fold(0u8, |m, f| m | ((c.finger_mask[f] as u8) << f));
        out.push(mask);
        let put = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        match &self.calibration {
            Some(cal) => {
                out.extend_from_slice(&(cal.channel_gain.len() as u32).to_le_bytes());
                put(&mut out, &cal.channel_gain);
                out.extend_from_slice(&(cal.standardizer.dim() as u32).to_le_bytes());
                put(&mut out, &cal.standardizer.mean);
                put(&mut out, &cal.standardizer.scale);
            }
            None => out.extend_from_slice(&[0; 8]),
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        put(&mut out, &self.params.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let dropout_p = r.f64()?;
        let mask = r.take(1)?[0];
        let config = ModelConfig {
            input_channels: dims[0],
            seq_len: dims[1],
            conv_out: dims[2],
            conv_kernel: dims[3],
            gru_hidden: dims[4],
            linear_hidden: dims[5],
            outputs: dims[6],
            dropout_p,
            finger_mask: std::array::from_fn(|f| mask >> f & 1 == 1),
        };
        config.validate()?;
        let gains = r.u32()? as usize;
        let channel_gain = r.f64s(gains)?;
        let dim = r.u32()? as usize;
        let mean = r.f64s(dim)?;
        let scale = r.f64s(dim)?;
        let calibration = if gains == 0 && dim == 0 {
            None
        } else {
            Some(Calibration {
                channel_gain,
                standardizer: Standardizer { mean, scale },
            })
        };
        let n = r.u64()? as usize;
        let expected = super::parameter_count(&config)?;
        if n != expected {
            return Err(Error::Format(format!("{n} parameters stored, config needs {expected}")));
        }
        let data = r.f64s(n)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            params: ModelParams::from_vec(config, data)?,
            calibration,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
