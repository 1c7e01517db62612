//! Hand-controller serial frames and an emulated slew-limited hand.
//!
//! Frame: `0x7E`, five state bytes (`0x01` flex, `0x00` extend, thumb first),
//! then the XOR of the six preceding bytes.

use std::fmt::Write as _;

use crate::decoder::Prediction;
use crate::error::{Error, Result};
use crate::synthgen::FINGERS;

pub const SYNC: u8 = 0x7E;
pub const FRAME_LEN: usize = FINGERS + 2;
/// Full travel takes this long.
pub const DEFAULT_TRAVEL_S: f64 = 0.8;

pub fn encode_states(states: &[bool; FINGERS]) -> [u8; FRAME_LEN] {
    let mut f = [0u8; FRAME_LEN];
    f[0] = SYNC;
    for (i, &s) in states.iter().enumerate() {
        f[1 + i] = s as u8;
    }
    f[FRAME_LEN - 1] = f[..FRAME_LEN - 1].iter().fold(0, |x, b| x ^ b);
    f
}

pub fn encode_command(pred: &Prediction) -> [u8; FRAME_LEN] {
    encode_states(&pred.states)
}

/// Validates sync, state bytes and checksum; any defect rejects the whole frame.
pub fn decode_frame(frame: &[u8]) -> Result<[bool; FINGERS]> {
    if frame.len() != FRAME_LEN {
        return Err(Error::Format(format!("hand frame of {} bytes", frame.len())));
    }
    if frame[0] != SYNC {
        return Err(Error::Format(format!("hand frame sync {:#04x}", frame[0])));
    }
    let check = frame[..FRAME_LEN - 1].iter().fold(0, |x, b| x ^ b);
    if check != frame[FRAME_LEN - 1] {
        return Err(Error::Format("hand frame checksum mismatch".into()));
    }
    let mut states = [false; FINGERS];
    for (i, s) in states.iter_mut().enumerate() {
        *s = match frame[1 + i] {
            0 => false,
            1 => true,
            b => return Err(Error::Format(format!("hand state byte {b:#04x}"))),
        };
    }
    Ok(states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Flex,
    Extend,
}

/// PWM command for one finger motor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MotorCommand {
    pub finger: u8,
    pub target: Target,
    pub duty: u8,
}

/// Five fingers moving toward binary targets at a bounded rate.
#[derive(Debug, Clone, PartialEq)]
pub struct HandEmulator {
    pub positions: [f64; FINGERS],
    pub targets: [bool; FINGERS],
    /// Position units per second.
    pub slew_per_s: f64,
    pub frame_errors: u64,
    pub time_s: f64,
}

impl Default for HandEmulator {
    fn default() -> Self {
        Self::new(DEFAULT_TRAVEL_S).expect("positive travel time")
    }
}

impl HandEmulator {
    pub fn new(travel_s: f64) -> Result<Self> {
        if !(travel_s > 0.0) {
            return Err(Error::Config("travel time must be positive".into()));
        }
        Ok(Self {
            positions: [0.0; FINGERS],
            targets: [false; FINGERS],
            slew_per_s: 1.0 / travel_s,
            frame_errors: 0,
            time_s: 0.0,
        })
    }

    /// Applies a frame's targets; a malformed frame is counted and ignored.
    pub fn apply_frame(&mut self, frame: &[u8]) -> bool {
        match decode_frame(frame) {
            Ok(s) => {
                self.targets = s;
                true
            }
            Err(_) => {
                self.frame_errors += 1;
                false
            }
        }
    }

    /// Moves every finger toward its target by at most `slew × dt`.
    pub fn step(&mut self, dt_s: f64) -> Result<()> {
        if !(dt_s > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        let max_step = self.slew_per_s * dt_s;
        for (p, &t) in self.positions.iter_mut().zip(&self.targets) {
            let goal = if t { 1.0 } else { 0.0 };
            let diff = goal - *p;
            // Snap when the remaining distance is one step up to rounding.
            *p = if diff.abs() <= max_step * (1.0 + 1e-9) {
                goal
            } else {
                *p + max_step.copysign(diff)
            };
        }
        self.time_s += dt_s;
        Ok(())
    }

    pub fn step_frame(&mut self, frame: &[u8], dt_s: f64) -> Result<bool> {
        let ok = self.apply_frame(frame);
        self.step(dt_s)?;
        Ok(ok)
    }

    pub fn motor_commands(&self) -> [MotorCommand; FINGERS] {
        std::array::from_fn(|f| {
            let goal = if self.targets[f] { 1.0 } else { 0.0 };
            MotorCommand {
                finger: f as u8,
                target: if self.targets[f] { Target::Flex } else { Target::Extend },
                duty: if self.positions[f] == goal { 0 } else { 255 },
            }
        })
    }
}

/// Hand positions over time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<(f64, [f64; FINGERS])>,
}

impl Trajectory {
    pub fn record(&mut self, hand: &HandEmulator) {
        self.rows.push((hand.time_s, hand.positions));
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,pos1,pos2,pos3,pos4,pos5\n");
        for (t, p) in &self.rows {
            let _ = write!(s, "{t:.6}");
            for v in p {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s
    }
}
