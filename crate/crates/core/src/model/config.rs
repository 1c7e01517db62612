use crate::error::{Error, Result};
use crate::synthgen::FINGERS;

/// Shape of one decoder network and the fingers it owns.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub seq_len: usize,
    pub conv_out: usize,
    pub conv_kernel: usize,
    pub gru_hidden: usize,
    pub linear_hidden: usize,
    pub outputs: usize,
    pub dropout_p: f64,
    pub finger_mask: [bool; FINGERS],
}

impl ModelConfig {
    /// 224 → conv 128 (k = 3) → GRU 384 → GRU 384 → 64 → 5; 1 587 973 parameters.
    pub fn full() -> Self {
        Self {
            input_channels: 224,
            seq_len: 50,
            conv_out: 128,
            conv_kernel: 3,
            gru_hidden: 384,
            linear_hidden: 64,
            outputs: FINGERS,
            dropout_p: 0.5,
            finger_mask: [true; FINGERS],
        }
    }

    /// Desk-scale network used for training tests. Dropout is lighter than in
    /// the full network: at p = 0.5 over only 8 conv channels, single-finger
    /// patterns never separate from multi-finger ones within a few epochs.
    pub fn tiny() -> Self {
        Self {
            conv_out: 8,
            gru_hidden: 16,
            linear_hidden: 16,
            dropout_p: 0.1,
            ..Self::full()
        }
    }

    pub fn with_mask(mut self, mask: [bool; FINGERS]) -> Self {
        self.finger_mask = mask;
        self
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.seq_len
    }

    pub fn owned(&self) -> impl Iterator<Item = usize> + '_ {
        (0..FINGERS).filter(|&f| self.finger_mask[f])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_channels", self.input_channels),
            ("seq_len", self.seq_len),
            ("conv_out", self.conv_out),
            ("conv_kernel", self.conv_kernel),
            ("gru_hidden", self.gru_hidden),
            ("linear_hidden", self.linear_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::Config("conv_kernel must be odd for same padding".into()));
        }
        if self.outputs != FINGERS {
            return Err(Error::Config(format!("outputs must be {FINGERS}")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config("dropout_p must lie in [0, 1)".into()));
        }
        if !self.finger_mask.iter().any(|&b| b) {
            return Err(Error::Config("model owns no finger".into()));
        }
        Ok(())
    }
}

/// Named parameter blocks, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    ConvW,
    ConvB,
    EncW,
    EncU,
    EncB,
    DecW,
    DecU,
    DecB,
    Lin1W,
    Lin1B,
    Lin2W,
    Lin2B,
}

impl Block {
    pub const ALL: [Block; 12] = [
        Block::ConvW,
        Block::ConvB,
        Block::EncW,
        Block::EncU,
        Block::EncB,
        Block::DecW,
        Block::DecU,
        Block::DecB,
        Block::Lin1W,
        Block::Lin1B,
        Block::Lin2W,
        Block::Lin2B,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::ConvW => "conv.weight",
            Block::ConvB => "conv.bias",
            Block::EncW => "encoder.w",
            Block::EncU => "encoder.u",
            Block::EncB => "encoder.bias",
            Block::DecW => "decoder.w",
            Block::DecU => "decoder.u",
            Block::DecB => "decoder.bias",
            Block::Lin1W => "linear1.weight",
            Block::Lin1B => "linear1.bias",
            Block::Lin2W => "linear2.weight",
            Block::Lin2B => "linear2.bias",
        }
    }

    /// Layer a block belongs to, for error reporting.
    pub fn layer(self) -> &'static str {
        match self {
            Block::ConvW | Block::ConvB => "conv",
            Block::EncW | Block::EncU | Block::EncB => "encoder",
            Block::DecW | Block::DecU | Block::DecB => "decoder",
            Block::Lin1W | Block::Lin1B => "linear1",
            Block::Lin2W | Block::Lin2B => "linear2",
        }
    }
}

/// Offsets of each block in the flat parameter vector.
///
/// Layouts: conv `[out][k][in]`, GRU `w` `[gate][hidden][in]` and `u`
/// `[gate][hidden][hidden]` with gates ordered r, z, n, GRU bias `[gate][hidden]`,
/// linear `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    offsets: [usize; 13],
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (ci, co, k, h, l, o) = (
            c.input_channels,
            c.conv_out,
            c.conv_kernel,
            c.gru_hidden,
            c.linear_hidden,
            c.outputs,
        );
        let sizes = [
            co * k * ci,
            co,
            3 * h * co,
            3 * h * h,
            3 * h,
            3 * h * h,
            3 * h * h,
            3 * h,
            l * h,
            l,
            o * l,
            o,
        ];
        let mut offsets = [0; 13];
        for (i, s) in sizes.iter().enumerate() {
            offsets[i + 1] = offsets[i] + s;
        }
        Self { offsets }
    }

    pub fn range(&self, b: Block) -> std::ops::Range<usize> {
        let i = b as usize;
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn total(&self) -> usize {
        self.offsets[12]
    }

    pub fn block_of(&self, index: usize) -> Block {
        Block::ALL
            .into_iter()
            .find(|&b| self.range(b).contains(&index))
            .expect("index within layout")
    }
}

/// Exact number of scalars in a network of this shape.
pub fn parameter_count(c: &ModelConfig) -> Result<usize> {
    c.validate()?;
    Ok(Layout::new(c).total())
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub plateau_patience: usize,
    pub lr_drop_factor: f64,
    pub seed: u64,
    /// Use every n-th training window per epoch, with a rotating phase.
    pub window_stride: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            beta1: 0.99,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
            batch: 64,
            epochs: 3,
            lr0: 1e-3,
            plateau_patience: 2,
            lr_drop_factor: 10.0,
            seed: 0,
            window_stride: 1,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch == 0 || self.window_stride == 0 {
            return Err(Error::Config("batch and window_stride must be positive".into()));
        }
        if !(self.lr0 > 0.0) || !(self.lr_drop_factor > 1.0) {
            return Err(Error::Config("lr0 must be positive and lr_drop_factor above 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}
