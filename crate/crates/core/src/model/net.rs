//! Forward evaluation and reverse-mode gradients of the decoder network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Block, Layout, ModelConfig};
use crate::dsp::FeatureWindow;
use crate::error::{Error, Result};
use crate::synthgen::FINGERS;

/// Flat parameter vector plus its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    layout: Layout,
    pub data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let data = vec![0.0; layout.total()];
        Ok(Self { config, layout, data })
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) per block; GRU biases use the hidden size.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let c = &p.config;
        let fan = |b: Block| -> usize {
            match b {
                Block::ConvW | Block::ConvB => c.input_channels * c.conv_kernel,
                Block::EncW => c.conv_out,
                Block::EncU | Block::EncB | Block::DecW | Block::DecU | Block::DecB | Block::Lin1W | Block::Lin1B => {
                    c.gru_hidden
                }
                Block::Lin2W | Block::Lin2B => c.linear_hidden,
            }
        };
        let bounds: Vec<(std::ops::Range<usize>, f64)> = Block::ALL
            .iter()
            .map(|&b| (p.layout.range(b), 1.0 / (fan(b) as f64).sqrt()))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (range, bound) in bounds {
            for v in &mut p.data[range] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(p)
    }

    /// Rebuilds parameters from a flat vector.
    pub fn from_vec(config: ModelConfig, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if data.len() != p.data.len() {
            return Err(Error::Shape(format!(
                "{} parameters for a network of {}",
                data.len(),
                p.data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[self.layout.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.layout.range(b);
        &mut self.data[r]
    }

    pub fn check_finite(&self) -> Result<()> {
        for b in Block::ALL {
            if !self.block(b).iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { layer: b.layer() });
            }
        }
        Ok(())
    }

    /// Whether each parameter enters the weight-decay term. Output rows and
    /// biases of fingers the model does not own are excluded, so their
    /// gradients stay exactly zero.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.data.len()];
        let l = self.config.linear_hidden;
        let w = self.layout.range(Block::Lin2W).start;
        let b = self.layout.range(Block::Lin2B).start;
        for f in (0..FINGERS).filter(|&f| !self.config.finger_mask[f]) {
            mask[w + f * l..w + (f + 1) * l].fill(false);
            mask[b + f] = false;
        }
        mask
    }

    /// Deterministic inference on a time-major `[seq_len][input_channels]` input.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; FINGERS]> {
        Ok(self.forward_trace(x, None)?.probs())
    }

    pub fn forward_window(&self, w: &FeatureWindow) -> Result<[f64; FINGERS]> {
        if w.rows() != self.config.input_channels || w.len() != self.config.seq_len {
            return Err(Error::Shape(format!(
                "window {}×{} for a {}×{} model",
                w.rows(),
                w.len(),
                self.config.input_channels,
                self.config.seq_len
            )));
        }
        self.forward(&w.to_time_major())
    }

    /// Forward pass keeping every activation. `dropout` seeds the masks;
    /// `None` is inference mode.
    pub fn forward_trace(&self, x: &[f64], dropout: Option<u64>) -> Result<Trace> {
        let c = &self.config;
        if x.len() != c.input_len() {
            return Err(Error::Shape(format!("input of {} values, expected {}", x.len(), c.input_len())));
        }
        let (t_len, ci, co, k, h, l) = (
            c.seq_len,
            c.input_channels,
            c.conv_out,
            c.conv_kernel,
            c.gru_hidden,
            c.linear_hidden,
        );
        let mut rng = dropout.map(ChaCha8Rng::seed_from_u64);
        let keep = 1.0 - c.dropout_p;
        let mut mask = |n: usize| -> Option<Vec<f64>> {
            rng.as_mut()
                .map(|r| (0..n).map(|_| if r.gen::<f64>() < c.dropout_p { 0.0 } else { 1.0 / keep }).collect())
        };

        let w = self.block(Block::ConvW);
        let b = self.block(Block::ConvB);
        let pad = k / 2;
        let mut conv_pre = vec![0.0; t_len * co];
        for t in 0..t_len {
            for o in 0..co {
                let mut acc = b[o];
                for j in 0..k {
                    let src = t + j;
                    if src < pad || src - pad >= t_len {
                        continue;
                    }
                    let xi = &x[(src - pad) * ci..(src - pad + 1) * ci];
                    acc += dot(&w[(o * k + j) * ci..(o * k + j + 1) * ci], xi);
                }
                conv_pre[t * co + o] = acc;
            }
        }
        let conv_mask = mask(t_len * co);
        let mut conv = conv_pre.iter().map(|&a| a.max(0.0)).collect::<Vec<_>>();
        if let Some(m) = &conv_mask {
            conv.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
        }
        // ReLU would mask a NaN, so check before it.
        ensure_finite(&conv_pre, "conv")?;

        let enc = gru_forward(&self.gru(Block::EncW, co), &conv, t_len);
        ensure_finite(&enc.hs, "encoder")?;
        let dec = gru_forward(&self.gru(Block::DecW, h), &enc.hs[h..], t_len);
        ensure_finite(&dec.hs, "decoder")?;

        let head_mask = mask(h);
        let mut g = dec.hs[t_len * h..].to_vec();
        if let Some(m) = &head_mask {
            g.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
        }
        let w1 = self.block(Block::Lin1W);
        let b1 = self.block(Block::Lin1B);
        let q_pre: Vec<f64> = (0..l).map(|i| b1[i] + dot(&w1[i * h..(i + 1) * h], &g)).collect();
        ensure_finite(&q_pre, "linear1")?;
        let q: Vec<f64> = q_pre.iter().map(|v| v.max(0.0)).collect();
        let w2 = self.block(Block::Lin2W);
        let b2 = self.block(Block::Lin2B);
        let s: [f64; FINGERS] = std::array::from_fn(|f| b2[f] + dot(&w2[f * l..(f + 1) * l], &q));
        ensure_finite(&s, "linear2")?;
        Ok(Trace {
            conv_pre,
            conv_mask,
            conv,
            enc,
            dec,
            head_mask,
            g,
            q_pre,
            q,
            logits: s,
        })
    }

    fn gru(&self, w: Block, input: usize) -> GruView<'_> {
        let (u, b) = match w {
            Block::EncW => (Block::EncU, Block::EncB),
            _ => (Block::DecU, Block::DecB),
        };
        GruView {
            w: self.block(w),
            u: self.block(u),
            b: self.block(b),
            input,
            hidden: self.config.gru_hidden,
        }
    }
}

fn ensure_finite(v: &[f64], layer: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer })
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a (possibly soft) target.
pub fn bce_with_logit(s: f64, y: f64) -> f64 {
    s.max(0.0) - s * y + (-s.abs()).exp().ln_1p()
}

struct GruView<'a> {
    w: &'a [f64],
    u: &'a [f64],
    b: &'a [f64],
    input: usize,
    hidden: usize,
}

/// Per-step activations of one GRU layer; `hs` holds `h_0 .. h_T`.
#[derive(Debug, Clone)]
pub struct GruTrace {
    pub hs: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    un: Vec<f64>,
}

fn gru_forward(p: &GruView, xs: &[f64], steps: usize) -> GruTrace {
    let (h, i) = (p.hidden, p.input);
    let mut tr = GruTrace {
        hs: vec![0.0; (steps + 1) * h],
        r: vec![0.0; steps * h],
        z: vec![0.0; steps * h],
        n: vec![0.0; steps * h],
        un: vec![0.0; steps * h],
    };
    for t in 0..steps {
        let x = &xs[t * i..(t + 1) * i];
        let (prev, next) = tr.hs.split_at_mut((t + 1) * h);
        let hp = &prev[t * h..];
        for j in 0..h {
            let row = |g: usize| g * h + j;
            let ar = p.b[row(0)] + dot(&p.w[row(0) * i..(row(0) + 1) * i], x) + dot(&p.u[row(0) * h..(row(0) + 1) * h], hp);
            let az = p.b[row(1)] + dot(&p.w[row(1) * i..(row(1) + 1) * i], x) + dot(&p.u[row(1) * h..(row(1) + 1) * h], hp);
            let un = dot(&p.u[row(2) * h..(row(2) + 1) * h], hp);
            let r = sigmoid(ar);
            let z = sigmoid(az);
            let n = (p.b[row(2)] + dot(&p.w[row(2) * i..(row(2) + 1) * i], x) + r * un).tanh();
            next[j] = (1.0 - z) * n + z * hp[j];
            tr.r[t * h + j] = r;
            tr.z[t * h + j] = z;
            tr.n[t * h + j] = n;
            tr.un[t * h + j] = un;
        }
    }
    tr
}

/// Backpropagates `dh_out` (gradient w.r.t. each step's output, `[T][H]`)
/// through the layer, accumulating into `gw`, `gu`, `gb` and `dx`.
#[allow(clippy::too_many_arguments)]
fn gru_backward(
    p: &GruView,
    tr: &GruTrace,
    xs: &[f64],
    dh_out: &[f64],
    gw: &mut [f64],
    gu: &mut [f64],
    gb: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let (h, i) = (p.hidden, p.input);
    let steps = dh_out.len() / h;
    let mut carry = vec![0.0; h];
    let mut da = vec![0.0; 3 * h];
    let mut dun = vec![0.0; h];
    for t in (0..steps).rev() {
        let x = &xs[t * i..(t + 1) * i];
        let hp = &tr.hs[t * h..(t + 1) * h];
        for j in 0..h {
            let k = t * h + j;
            let (r, z, n, un) = (tr.r[k], tr.z[k], tr.n[k], tr.un[k]);
            let dh = carry[j] + dh_out[k];
            let dn = dh * (1.0 - z);
            let dz = dh * (hp[j] - n);
            let dan = dn * (1.0 - n * n);
            let dr = dan * un;
            da[j] = dr * r * (1.0 - r);
            da[h + j] = dz * z * (1.0 - z);
            da[2 * h + j] = dan;
            dun[j] = dan * r;
            carry[j] = dh * z;
        }
        for g in 0..3 {
            for j in 0..h {
                let row = g * h + j;
                let a = da[row];
                gb[row] += a;
                axpy(a, x, &mut gw[row * i..(row + 1) * i]);
                if let Some(dx) = dx.as_deref_mut() {
                    axpy(a, &p.w[row * i..(row + 1) * i], &mut dx[t * i..(t + 1) * i]);
                }
                let au = if g == 2 { dun[j] } else { a };
                axpy(au, hp, &mut gu[row * h..(row + 1) * h]);
                axpy(au, &p.u[row * h..(row + 1) * h], &mut carry);
            }
        }
    }
}

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    conv_pre: Vec<f64>,
    conv_mask: Option<Vec<f64>>,
    conv: Vec<f64>,
    pub enc: GruTrace,
    pub dec: GruTrace,
    head_mask: Option<Vec<f64>>,
    g: Vec<f64>,
    q_pre: Vec<f64>,
    q: Vec<f64>,
    pub logits: [f64; FINGERS],
}

impl Trace {
    pub fn probs(&self) -> [f64; FINGERS] {
        self.logits.map(sigmoid)
    }
}

/// One training example: time-major input and per-finger targets in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub y: [f64; FINGERS],
}

/// Loss, gradient and per-sample outputs of one batch.
#[derive(Debug, Clone)]
pub struct Gradient {
    /// Mean BCE plus the weight-decay term.
    pub loss: f64,
    pub data_loss: f64,
    pub grad: Vec<f64>,
    pub probs: Vec<[f64; FINGERS]>,
}

/// Mean BCE over owned fingers and samples plus `weight_decay · ‖θ‖²`, and its
/// exact gradient. With `dropout`, sample `i` uses masks seeded by `seed + i`.
pub fn backward(params: &ModelParams, batch: &[Sample], weight_decay: f64, dropout: Option<u64>) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let c = &params.config;
    let owned: Vec<usize> = c.owned().collect();
    let scale = 1.0 / (owned.len() * batch.len()) as f64;
    let lay = params.layout().clone();
    let mut grad = vec![0.0; params.len()];
    let mut data_loss = 0.0;
    let mut probs = Vec::with_capacity(batch.len());
    let (t_len, ci, co, k, h, l) = (
        c.seq_len,
        c.input_channels,
        c.conv_out,
        c.conv_kernel,
        c.gru_hidden,
        c.linear_hidden,
    );

    for (idx, s) in batch.iter().enumerate() {
        let tr = params.forward_trace(s.x, dropout.map(|d| d.wrapping_add(idx as u64)))?;
        let p = tr.probs();
        let mut ds = [0.0; FINGERS];
        for &f in &owned {
            data_loss += bce_with_logit(tr.logits[f], s.y[f]) * scale;
            ds[f] = (p[f] - s.y[f]) * scale;
        }
        probs.push(p);

        let (gl2w, gl2b) = (lay.range(Block::Lin2W), lay.range(Block::Lin2B));
        let w2 = params.block(Block::Lin2W);
        let mut dq = vec![0.0; l];
        for &f in &owned {
            axpy(ds[f], &tr.q, &mut grad[gl2w.start + f * l..gl2w.start + (f + 1) * l]);
            grad[gl2b.start + f] += ds[f];
            axpy(ds[f], &w2[f * l..(f + 1) * l], &mut dq);
        }
        for (d, pre) in dq.iter_mut().zip(&tr.q_pre) {
            if *pre <= 0.0 {
                *d = 0.0;
            }
        }
        let (gl1w, gl1b) = (lay.range(Block::Lin1W), lay.range(Block::Lin1B));
        let w1 = params.block(Block::Lin1W);
        let mut dg = vec![0.0; h];
        for i in 0..l {
            axpy(dq[i], &tr.g, &mut grad[gl1w.start + i * h..gl1w.start + (i + 1) * h]);
            grad[gl1b.start + i] += dq[i];
            axpy(dq[i], &w1[i * h..(i + 1) * h], &mut dg);
        }
        if let Some(m) = &tr.head_mask {
            dg.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
        }

        let mut dh_dec = vec![0.0; t_len * h];
        dh_dec[(t_len - 1) * h..].copy_from_slice(&dg);
        let mut de = vec![0.0; t_len * h];
        {
            let (gw, rest) = grad[lay.range(Block::DecW).start..].split_at_mut(3 * h * h);
            let (gu, rest) = rest.split_at_mut(3 * h * h);
            let gb = &mut rest[..3 * h];
            gru_backward(&params.gru(Block::DecW, h), &tr.dec, &tr.enc.hs[h..], &dh_dec, gw, gu, gb, Some(&mut de));
        }
        let mut dconv = vec![0.0; t_len * co];
        {
            let (gw, rest) = grad[lay.range(Block::EncW).start..].split_at_mut(3 * h * co);
            let (gu, rest) = rest.split_at_mut(3 * h * h);
            let gb = &mut rest[..3 * h];
            gru_backward(&params.gru(Block::EncW, co), &tr.enc, &tr.conv, &de, gw, gu, gb, Some(&mut dconv));
        }

        if let Some(m) = &tr.conv_mask {
            dconv.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
        }
        let pad = k / 2;
        let (gcw, gcb) = (lay.range(Block::ConvW).start, lay.range(Block::ConvB).start);
        for t in 0..t_len {
            for o in 0..co {
                let d = if tr.conv_pre[t * co + o] > 0.0 { dconv[t * co + o] } else { 0.0 };
                if d == 0.0 {
                    continue;
                }
                grad[gcb + o] += d;
                for j in 0..k {
                    let src = t + j;
                    if src < pad || src - pad >= t_len {
                        continue;
                    }
                    let xi = &s.x[(src - pad) * ci..(src - pad + 1) * ci];
                    let off = gcw + (o * k + j) * ci;
                    axpy(d, xi, &mut grad[off..off + ci]);
                }
            }
        }
    }

    let mut loss = data_loss;
    if weight_decay != 0.0 {
        for ((g, &v), keep) in grad.iter_mut().zip(&params.data).zip(params.decay_mask()) {
            if keep {
                loss += weight_decay * v * v;
                *g += 2.0 * weight_decay * v;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { layer: "loss" });
    }
    Ok(Gradient {
        loss,
        data_loss,
        grad,
        probs,
    })
}
