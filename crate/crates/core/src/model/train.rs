//! Adam, the plateau learning-rate schedule and the epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Block, TrainSpec};
use super::net::{backward, ModelParams, Sample};
use crate::dsp::FeatureSequence;
use crate::error::{Error, Result};
use crate::synthgen::{derive_seed, FINGERS, GLOVE_RATE_HZ};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Divides the learning rate when the epoch loss stops improving.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub patience: usize,
    pub factor: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, patience: usize, factor: f64) -> Self {
        Self {
            lr,
            patience,
            factor,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records an epoch loss and returns the learning rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr /= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

/// Glove label index covering acquisition time `t_ns`.
pub fn label_index(t_ns: u64) -> usize {
    (t_ns as u128 * GLOVE_RATE_HZ as u128 / 1_000_000_000) as usize
}

/// Training windows drawn from feature sequences, addressed without copying.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    steps: usize,
    dim: usize,
    sequences: Vec<FeatureSequence>,
    targets: Vec<Vec<[f64; FINGERS]>>,
    index: Vec<(u32, u32)>,
}

impl WindowSet {
    pub fn new(steps: usize, dim: usize) -> Self {
        Self {
            steps,
            dim,
            ..Default::default()
        }
    }

    /// Adds every full window of `seq`, labelled by the glove sample at the
    /// window's newest acquisition time. Windows past the end of `labels` are skipped.
    pub fn add_sequence(&mut self, seq: FeatureSequence, labels: &[[bool; FINGERS]]) -> Result<()> {
        if seq.dim != self.dim {
            return Err(Error::Shape(format!("{}-feature sequence into a {}-feature set", seq.dim, self.dim)));
        }
        let targets: Vec<[f64; FINGERS]> = seq
            .times_ns
            .iter()
            .map(|&t| labels.get(label_index(t)).map_or([f64::NAN; FINGERS], |l| l.map(|b| b as u8 as f64)))
            .collect();
        let s = self.sequences.len() as u32;
        for k in self.steps.saturating_sub(1)..seq.len() {
            if !targets[k][0].is_nan() {
                self.index.push((s, k as u32));
            }
        }
        self.sequences.push(seq);
        self.targets.push(targets);
        Ok(())
    }

    /// Adds one standalone window with soft targets.
    pub fn add_window(&mut self, x: Vec<f64>, y: [f64; FINGERS]) -> Result<()> {
        if x.len() != self.steps * self.dim {
            return Err(Error::Shape(format!("window of {} values", x.len())));
        }
        let times_ns = vec![0; self.steps];
        let mut targets = vec![[f64::NAN; FINGERS]; self.steps];
        targets[self.steps - 1] = y;
        self.index.push((self.sequences.len() as u32, self.steps as u32 - 1));
        self.sequences.push(FeatureSequence {
            dim: self.dim,
            values: x,
            times_ns,
        });
        self.targets.push(targets);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        let (s, k) = self.index[i];
        Sample {
            x: self.sequences[s as usize].window(k as usize, self.steps),
            y: self.targets[s as usize][k as usize],
        }
    }

    /// Acquisition time of sample `i`'s newest feature.
    pub fn time_ns(&self, i: usize) -> u64 {
        let (s, k) = self.index[i];
        self.sequences[s as usize].times_ns[k as usize]
    }

    pub fn sequence_of(&self, i: usize) -> usize {
        self.index[i].0 as usize
    }

    /// Fraction of positive targets per finger.
    pub fn positive_rate(&self) -> [f64; FINGERS] {
        let mut pos = [0.0; FINGERS];
        for i in 0..self.len() {
            let y = self.sample(i).y;
            for f in 0..FINGERS {
                pos[f] += y[f];
            }
        }
        pos.map(|p| p / self.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss during the epoch (with dropout).
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_accuracy,val_loss,val_accuracy";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        format!(
            "{},{:e},{:.6},{:.6},{},{}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.train_accuracy,
            opt(self.val_loss),
            opt(self.val_accuracy)
        )
    }
}

/// Inference over a whole set: per-sample probabilities.
pub fn predict(params: &ModelParams, set: &WindowSet) -> Result<Vec<[f64; FINGERS]>> {
    (0..set.len()).map(|i| params.forward(set.sample(i).x)).collect()
}

/// Mean owned-finger BCE and per-finger-decision accuracy on a set.
pub fn evaluate(params: &ModelParams, set: &WindowSet) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let owned: Vec<usize> = params.config.owned().collect();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..set.len() {
        let s = set.sample(i);
        let tr = params.forward_trace(s.x, None)?;
        let p = tr.probs();
        for &f in &owned {
            loss += super::net::bce_with_logit(tr.logits[f], s.y[f]);
            correct += ((p[f] > 0.5) == (s.y[f] > 0.5)) as usize;
        }
    }
    let n = (set.len() * owned.len()) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains in place. Same inputs and seed give bit-identical parameters.
pub fn train(
    params: &mut ModelParams,
    spec: &TrainSpec,
    train_set: &WindowSet,
    val_set: Option<&WindowSet>,
    mut progress: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    spec.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut adam = Adam::new(params.len(), spec.beta1, spec.beta2, spec.eps);
    let mut sched = PlateauScheduler::new(spec.lr0, spec.plateau_patience, spec.lr_drop_factor);
    let mut log = Vec::with_capacity(spec.epochs);
    for epoch in 0..spec.epochs {
        let lr = sched.lr;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[epoch as u64]));
        let phase = epoch % spec.window_stride;
        let mut order: Vec<usize> = (phase..train_set.len()).step_by(spec.window_stride).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(spec.batch).enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set.sample(i)).collect();
            let seed = derive_seed(spec.seed, &[epoch as u64, b as u64]);
            let g = backward(params, &batch, spec.weight_decay, Some(seed))?;
            adam.step(&mut params.data, &g.grad, lr);
            params.check_finite()?;
            total += g.loss;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        let (_, train_accuracy) = evaluate(params, train_set)?;
        let (val_loss, val_accuracy) = match val_set {
            Some(v) if !v.is_empty() => {
                let (l, a) = evaluate(params, v)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        sched.observe(train_loss);
        let entry = EpochLog {
            epoch,
            lr,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        };
        progress(&entry);
        log.push(entry);
    }
    Ok(log)
}

/// Name of the block holding parameter `index`.
pub fn block_name(params: &ModelParams, index: usize) -> &'static str {
    let b: Block = params.layout().block_of(index);
    b.name()
}
