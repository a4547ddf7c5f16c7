//! One-hidden-layer sigmoid MLP producing a per-frame spoof posterior.
//!
//! Inputs are standardized with per-dimension statistics fitted on the
//! training frames and stored in the model. Training is plain mini-batch SGD
//! on binary cross-entropy. Batch gradients are accumulated over fixed-size
//! chunks in index order, so results do not depend on the thread count.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::FeatureMatrix;

pub const STD_FLOOR: f64 = 1e-6;
pub const MODEL_MAGIC: &[u8; 4] = b"SBML";
pub const MODEL_VERSION: u32 = 1;

/// Samples per gradient work unit.
const GRAD_CHUNK: usize = 32;
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Error, Debug)]
pub enum MlpError {
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("shape mismatch: expected {expected} dims, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("training data has only one class")]
    SingleClass,
    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("feature matrix must be stacked with deltas before scoring")]
    NotStacked,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input value")]
    NonFinite,
    #[error("model file format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, frame: &[f64], out: &mut [f64]) {
        for (((o, x), m), s) in out.iter_mut().zip(frame).zip(&self.mean).zip(&self.std) {
            *o = (x - m) / s;
        }
    }

    pub fn apply(&self, frame: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; frame.len()];
        self.apply_into(frame, &mut out);
        out
    }
}

/// Per-dimension mean and population standard deviation (floored at 1e-6).
pub fn fit_normalizer<'a>(frames: impl IntoIterator<Item = &'a [f64]>) -> Result<Normalizer, MlpError> {
    let frames: Vec<&[f64]> = frames.into_iter().collect();
    if frames.len() < 2 {
        return Err(MlpError::TooFewFrames {
            needed: 2,
            got: frames.len(),
        });
    }
    let dim = frames[0].len();
    let n = frames.len() as f64;
    let mut mean = vec![0.0; dim];
    for f in &frames {
        if f.len() != dim {
            return Err(MlpError::Shape {
                expected: dim,
                got: f.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(*f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for f in &frames {
        for ((v, x), m) in var.iter_mut().zip(*f).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    Ok(Normalizer { mean, std })
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Cross-entropy of a logit against a 0/1 label.
#[inline]
fn logit_loss(z: f64, spoof: bool) -> f64 {
    if spoof {
        softplus(-z)
    } else {
        softplus(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Row-major `hidden_dim x input_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub normalizer: Normalizer,
}

impl MlpModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
            normalizer: Normalizer::identity(input_dim),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(input_dim: usize, hidden_dim: usize, normalizer: Normalizer, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(input_dim, hidden_dim);
        let l1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let l2 = (6.0 / (hidden_dim + 1) as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.random_range(-l1..=l1));
        m.w2.iter_mut().for_each(|w| *w = rng.random_range(-l2..=l2));
        m.normalizer = normalizer;
        m
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Parameters in the order `W1, b1, w2, b2`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < a {
            &mut self.w1[i]
        } else if i < a + b {
            &mut self.b1[i - a]
        } else if i < a + b + c {
            &mut self.w2[i - a - b]
        } else {
            &mut self.b2
        }
    }

    fn check_dim(&self, frame: &[f64]) -> Result<(), MlpError> {
        if frame.len() != self.input_dim {
            return Err(MlpError::Shape {
                expected: self.input_dim,
                got: frame.len(),
            });
        }
        Ok(())
    }

    /// Hidden activations written into `hidden`; returns the output logit.
    fn logit_normalized(&self, x: &[f64], hidden: &mut [f64]) -> f64 {
        let mut z = self.b2;
        for (j, h) in hidden.iter_mut().enumerate() {
            let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
            let a: f64 = row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b1[j];
            *h = sigmoid(a);
            z += self.w2[j] * *h;
        }
        z
    }

    /// Spoof posterior of one raw (unnormalized) frame, in `(0, 1)`.
    pub fn forward(&self, frame: &[f64]) -> Result<f64, MlpError> {
        self.check_dim(frame)?;
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(MlpError::NonFinite);
        }
        let x = self.normalizer.apply(frame);
        let mut hidden = vec![0.0; self.hidden_dim];
        Ok(posterior(self.logit_normalized(&x, &mut hidden)))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MlpError> {
        fs::write(path, encode_model(self))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MlpError> {
        decode_model(&fs::read(path)?)
    }
}

fn posterior(z: f64) -> f64 {
    sigmoid(z).clamp(f64::MIN_POSITIVE, P_MAX)
}

/// Labelled frames, already in model input space or raw.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub spoof: Vec<bool>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            spoof: Vec::new(),
        }
    }

    pub fn push(&mut self, frame: &[f64], spoof: bool) -> Result<(), MlpError> {
        if frame.len() != self.dim {
            return Err(MlpError::Shape {
                expected: self.dim,
                got: frame.len(),
            });
        }
        self.inputs.extend_from_slice(frame);
        self.spoof.push(spoof);
        Ok(())
    }

    /// Adds every `stride`-th frame of an utterance.
    pub fn push_matrix(&mut self, m: &FeatureMatrix, spoof: bool, stride: usize) -> Result<(), MlpError> {
        for row in m.rows().step_by(stride.max(1)) {
            self.push(row, spoof)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spoof.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spoof.is_empty()
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.frame(i))
    }

    fn normalized(&self, norm: &Normalizer) -> Dataset {
        let mut inputs = vec![0.0; self.inputs.len()];
        for (i, out) in inputs.chunks_exact_mut(self.dim.max(1)).enumerate().take(self.len()) {
            norm.apply_into(self.frame(i), out);
        }
        Dataset {
            dim: self.dim,
            inputs,
            spoof: self.spoof.clone(),
        }
    }
}

/// Gradient of the mean batch loss, laid out like [`MlpModel::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradients {
    fn zeros(m: &MlpModel) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: 0.0,
        }
    }

    fn add(&mut self, o: &Gradients) {
        self.w1.iter_mut().zip(&o.w1).for_each(|(a, b)| *a += b);
        self.b1.iter_mut().zip(&o.b1).for_each(|(a, b)| *a += b);
        self.w2.iter_mut().zip(&o.w2).for_each(|(a, b)| *a += b);
        self.b2 += o.b2;
    }

    fn scale(&mut self, s: f64) {
        self.w1.iter_mut().for_each(|a| *a *= s);
        self.b1.iter_mut().for_each(|a| *a *= s);
        self.w2.iter_mut().for_each(|a| *a *= s);
        self.b2 *= s;
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }
}

/// Summed (not averaged) loss and gradient over normalized samples `idx`.
fn accumulate(model: &MlpModel, data: &Dataset, idx: &[usize]) -> (f64, Gradients) {
    let mut g = Gradients::zeros(model);
    let mut hidden = vec![0.0; model.hidden_dim];
    let mut loss = 0.0;
    let d = model.input_dim;
    for &i in idx {
        let x = data.frame(i);
        let y = data.spoof[i];
        let z = model.logit_normalized(x, &mut hidden);
        loss += logit_loss(z, y);
        let dz = sigmoid(z) - if y { 1.0 } else { 0.0 };
        g.b2 += dz;
        for j in 0..model.hidden_dim {
            let h = hidden[j];
            g.w2[j] += dz * h;
            let da = dz * model.w2[j] * h * (1.0 - h);
            if da != 0.0 {
                g.b1[j] += da;
                for (gw, xv) in g.w1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *gw += da * xv;
                }
            }
        }
    }
    (loss, g)
}

/// Mean loss and its gradient over a batch in normalized input space.
fn batch_gradient(model: &MlpModel, data: &Dataset, idx: &[usize]) -> (f64, Gradients) {
    let parts: Vec<(f64, Gradients)> = idx
        .par_chunks(GRAD_CHUNK)
        .map(|c| accumulate(model, data, c))
        .collect();
    let mut total = Gradients::zeros(model);
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add(g);
    }
    let n = idx.len().max(1) as f64;
    total.scale(1.0 / n);
    (loss / n, total)
}

/// Mean cross-entropy of `model` on raw frames.
pub fn batch_loss(model: &MlpModel, batch: &Dataset) -> f64 {
    let norm = batch.normalized(&model.normalizer);
    let mut hidden = vec![0.0; model.hidden_dim];
    let total: f64 = (0..norm.len())
        .map(|i| logit_loss(model.logit_normalized(norm.frame(i), &mut hidden), norm.spoof[i]))
        .sum();
    total / norm.len().max(1) as f64
}

/// Backpropagated gradient of [`batch_loss`] with respect to the parameters.
pub fn gradient(model: &MlpModel, batch: &Dataset) -> Gradients {
    let norm = batch.normalized(&model.normalizer);
    let idx: Vec<usize> = (0..norm.len()).collect();
    batch_gradient(model, &norm, &idx).1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 256,
            epochs: 20,
            seed: 0,
            hidden_dim: 2048,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(MlpError::InvalidConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.hidden_dim == 0 {
            return Err(MlpError::InvalidConfig(
                "batch size, epochs and hidden size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Mean training loss of each epoch, measured before each batch update.
    pub epoch_losses: Vec<f64>,
}

/// Starting from `model`, runs SGD on already-normalized data.
fn sgd(mut model: MlpModel, data: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<TrainOutcome, MlpError> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, g) = batch_gradient(&model, data, batch);
            if !loss.is_finite() {
                return Err(MlpError::Divergence { epoch });
            }
            total += loss * batch.len() as f64;
            let lr = cfg.learning_rate;
            model.w1.iter_mut().zip(&g.w1).for_each(|(w, d)| *w -= lr * d);
            model.b1.iter_mut().zip(&g.b1).for_each(|(w, d)| *w -= lr * d);
            model.w2.iter_mut().zip(&g.w2).for_each(|(w, d)| *w -= lr * d);
            model.b2 -= lr * g.b2;
        }
        let mean = total / data.len() as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(MlpError::Divergence { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome { model, epoch_losses })
}

/// Fits the normalizer on `data`, initializes from `cfg.seed` and trains.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, MlpError> {
    cfg.validate()?;
    if data.inputs.iter().any(|v| !v.is_finite()) {
        return Err(MlpError::NonFinite);
    }
    let spoof = data.spoof.iter().filter(|&&s| s).count();
    if spoof == 0 || spoof == data.len() {
        return Err(MlpError::SingleClass);
    }
    let normalizer = fit_normalizer(data.frames())?;
    let normalized = data.normalized(&normalizer);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = MlpModel::init(data.dim, cfg.hidden_dim, normalizer, &mut rng);
    sgd(model, &normalized, cfg, &mut rng)
}

/// Max relative error between an analytic gradient and central differences
/// (h = 1e-5) of [`batch_loss`]. Intended for small models.
pub fn gradient_check_with(
    model: &MlpModel,
    batch: &Dataset,
    analytic: impl Fn(&MlpModel, &Dataset) -> Gradients,
) -> f64 {
    const H: f64 = 1e-5;
    let ga = analytic(model, batch).flatten();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &a) in ga.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + H;
        let up = batch_loss(&probe, batch);
        *probe.param_mut(i) = orig - H;
        let down = batch_loss(&probe, batch);
        *probe.param_mut(i) = orig;
        let n = (up - down) / (2.0 * H);
        worst = worst.max((a - n).abs() / (a.abs() + n.abs()).max(1e-12));
    }
    worst
}

pub fn gradient_check(model: &MlpModel, batch: &Dataset) -> f64 {
    gradient_check_with(model, batch, gradient)
}

/// Mean frame posterior of a stacked feature matrix.
pub fn score_utterance(model: &MlpModel, features: &FeatureMatrix) -> Result<f64, MlpError> {
    if !features.is_stacked() {
        return Err(MlpError::NotStacked);
    }
    if features.n_frames() == 0 {
        return Err(MlpError::TooFewFrames { needed: 1, got: 0 });
    }
    let mut post = features
        .rows()
        .map(|r| model.forward(r))
        .collect::<Result<Vec<f64>, MlpError>>()?;
    // Summing in sorted order makes the mean independent of frame order.
    post.sort_by(f64::total_cmp);
    Ok(post.iter().sum::<f64>() / post.len() as f64)
}

pub fn encode_model(m: &MlpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * (m.param_count() + 2 * m.input_dim));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(m.hidden_dim as u32).to_le_bytes());
    let blocks: [&[f64]; 6] = [
        &m.normalizer.mean,
        &m.normalizer.std,
        &m.w1,
        &m.b1,
        &m.w2,
        std::slice::from_ref(&m.b2),
    ];
    for block in blocks {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<MlpModel, MlpError> {
    if bytes.len() < 16 || &bytes[..4] != MODEL_MAGIC {
        return Err(MlpError::Format("bad magic, not a model file".into()));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    if u32_at(4) != MODEL_VERSION as usize {
        return Err(MlpError::Format(format!("unsupported version {}", u32_at(4))));
    }
    let (input_dim, hidden_dim) = (u32_at(8), u32_at(12));
    let count = 2 * input_dim + hidden_dim * input_dim + 2 * hidden_dim + 1;
    if bytes.len() != 16 + 8 * count {
        return Err(MlpError::Format(format!(
            "payload is {} bytes, expected {} for {input_dim} x {hidden_dim}",
            bytes.len() - 16,
            8 * count
        )));
    }
    let mut vals = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
    let mean = take(input_dim);
    let std = take(input_dim);
    let w1 = take(hidden_dim * input_dim);
    let b1 = take(hidden_dim);
    let w2 = take(hidden_dim);
    let b2 = take(1)[0];
    let m = MlpModel {
        input_dim,
        hidden_dim,
        w1,
        b1,
        w2,
        b2,
        normalizer: Normalizer { mean, std },
    };
    if m.params().iter().chain(&m.normalizer.mean).any(|v| !v.is_finite())
        || m.normalizer.std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
    {
        return Err(MlpError::Format("non-finite parameter or non-positive std".into()));
    }
    Ok(m)
}
