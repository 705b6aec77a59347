//! Small fully connected two-class classifier with manual backpropagation.
//!
//! Parameters live in one flat [`ParamVector`]. For every layer
//! `fan_in -> fan_out` the layout is the weight matrix in row-major
//! `[fan_out][fan_in]` order followed by the `fan_out` biases; layers are
//! concatenated from input to output. Hidden layers use `tanh`, the output
//! layer is linear and the loss is the mean softmax cross-entropy.
//!
//! Training records the gradient of every processed batch (before the
//! optimizer consumes it) so the judge can featurize how gradients move.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Error, Result};
use crate::util::{self, Digest32, Reader};

/// Number of output classes. The task is always binary.
pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self { input_dim, hidden };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return config_err("input dimension must be positive");
        }
        if let Some(pos) = self.hidden.iter().position(|&h| h == 0) {
            return config_err(format!("hidden layer {pos} has zero width"));
        }
        Ok(())
    }

    /// `[input, hidden.., NUM_CLASSES]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(NUM_CLASSES);
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Flat model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// u64 little-endian length, then each value as a little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.0.len());
        out.extend_from_slice(&(self.0.len() as u64).to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let n = r.u64()? as usize;
        if bytes.len() != 8 + 8 * n {
            return Err(Error::Decode(format!(
                "parameter blob has {} bytes, expected {}",
                bytes.len(),
                8 + 8 * n
            )));
        }
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Self(values))
    }

    pub fn digest(&self) -> Digest32 {
        util::sha256(&self.to_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Generator-assigned identifier, used to audit data partitioning.
    pub id: u64,
    pub features: Vec<f64>,
    pub label: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            samples,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.samples.first() else {
            return input_err(format!("dataset `{}` is empty", self.name));
        };
        let dim = first.features.len();
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != dim {
                return input_err(format!(
                    "dataset `{}`: sample {i} has {} features, expected {dim}",
                    self.name,
                    s.features.len()
                ));
            }
            if usize::from(s.label) >= NUM_CLASSES {
                return input_err(format!(
                    "dataset `{}`: sample {i} has label {}",
                    self.name, s.label
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn count_label(&self, label: u8) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    /// Deterministic content digest over ids, labels and features.
    pub fn digest(&self) -> Digest32 {
        let mut bytes = Vec::with_capacity(self.samples.len() * (17 + 8 * self.dim()));
        bytes.extend_from_slice(&(self.samples.len() as u64).to_le_bytes());
        for s in &self.samples {
            bytes.extend_from_slice(&s.id.to_le_bytes());
            bytes.push(s.label);
            for v in &s.features {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        util::sha256(&bytes)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 8,
            learning_rate: 1e-4,
            optimizer: Optimizer::Adam,
            loss: Loss::CrossEntropy,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return config_err("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return config_err("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return config_err(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        Ok(())
    }
}

/// Gradients of every processed batch, in processing order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradTrace {
    pub per_batch: Vec<Vec<f64>>,
}

impl GradTrace {
    pub fn len(&self) -> usize {
        self.per_batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_batch.is_empty()
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(arch: &Architecture, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let mut rng = util::rng_from(seed);
    let mut params = Vec::with_capacity(arch.param_count());
    for w in arch.layer_sizes().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)));
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    Ok(ParamVector(params))
}

/// Per-call scratch space for forward/backward passes.
struct Workspace {
    sizes: Vec<usize>,
    /// Offset of each layer's weight block in the parameter vector.
    offsets: Vec<usize>,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &Architecture) -> Self {
        let sizes = arch.layer_sizes();
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let acts = sizes.iter().map(|&n| vec![0.0; n]).collect();
        let deltas = sizes.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            sizes,
            offsets,
            acts,
            deltas,
        }
    }

    fn forward(&mut self, params: &[f64], x: &[f64]) {
        self.acts[0].copy_from_slice(x);
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[self.offsets[l]..self.offsets[l] + fan_in * fan_out];
            let b = &params[self.offsets[l] + fan_in * fan_out..][..fan_out];
            let (prev, next) = self.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let z = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out[o] = if l + 1 < layers { z.tanh() } else { z };
            }
        }
    }

    fn logits(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    /// Adds `scale * d(loss)/d(params)` for the current forward pass into `grad`.
    fn backward(&mut self, params: &[f64], label: u8, scale: f64, grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let probs = softmax(self.logits());
        let top = self.deltas.last_mut().unwrap();
        for (k, d) in top.iter_mut().enumerate() {
            let target = if k == usize::from(label) { 1.0 } else { 0.0 };
            *d = (probs[k] - target) * scale;
        }
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let (lower, upper) = self.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let input = &self.acts[l];
            for o in 0..fan_out {
                let g_row = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, a) in g_row.iter_mut().zip(input) {
                    *g += delta[o] * a;
                }
                grad[off + fan_in * fan_out + o] += delta[o];
            }
            if l > 0 {
                let w = &params[off..off + fan_in * fan_out];
                let below = &mut lower[l];
                for (i, d) in below.iter_mut().enumerate() {
                    let back: f64 = (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum();
                    // acts[l] = tanh(z), so tanh'(z) = 1 - a^2
                    *d = back * (1.0 - input[i] * input[i]);
                }
            }
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_model(arch: &Architecture, model: &ParamVector) -> Result<()> {
    if model.len() != arch.param_count() {
        return input_err(format!(
            "model has {} parameters, architecture expects {}",
            model.len(),
            arch.param_count()
        ));
    }
    Ok(())
}

fn check_batch(arch: &Architecture, batch: &[&Sample]) -> Result<()> {
    if batch.is_empty() {
        return input_err("batch is empty");
    }
    for s in batch {
        if s.features.len() != arch.input_dim {
            return input_err(format!(
                "sample {} has {} features, architecture expects {}",
                s.id,
                s.features.len(),
                arch.input_dim
            ));
        }
        if usize::from(s.label) >= NUM_CLASSES {
            return input_err(format!("sample {} has label {}", s.id, s.label));
        }
    }
    Ok(())
}

fn batch_gradient(ws: &mut Workspace, params: &[f64], batch: &[&Sample]) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        ws.forward(params, &s.features);
        ws.backward(params, s.label, scale, &mut grad);
    }
    grad
}

/// Gradient of the mean cross-entropy over `batch`.
pub fn compute_gradients(
    arch: &Architecture,
    model: &ParamVector,
    batch: &[Sample],
) -> Result<Vec<f64>> {
    check_model(arch, model)?;
    let refs: Vec<&Sample> = batch.iter().collect();
    check_batch(arch, &refs)?;
    let mut ws = Workspace::new(arch);
    Ok(batch_gradient(&mut ws, &model.0, &refs))
}

/// Mean cross-entropy over `batch`.
pub fn loss(arch: &Architecture, model: &ParamVector, batch: &[Sample]) -> Result<f64> {
    check_model(arch, model)?;
    let refs: Vec<&Sample> = batch.iter().collect();
    check_batch(arch, &refs)?;
    let mut ws = Workspace::new(arch);
    let mut total = 0.0;
    for s in batch {
        ws.forward(&model.0, &s.features);
        let logits = ws.logits();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += lse - logits[usize::from(s.label)];
    }
    Ok(total / batch.len() as f64)
}

/// Predicted class: argmax of the logits, ties to the lower index.
pub fn predict(arch: &Architecture, model: &ParamVector, x: &[f64]) -> Result<u8> {
    check_model(arch, model)?;
    if x.len() != arch.input_dim {
        return input_err(format!(
            "input has {} features, expected {}",
            x.len(),
            arch.input_dim
        ));
    }
    let mut ws = Workspace::new(arch);
    ws.forward(&model.0, x);
    Ok(argmax(ws.logits()))
}

fn argmax(logits: &[f64]) -> u8 {
    let mut best = 0;
    for (k, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = k;
        }
    }
    best as u8
}

pub fn evaluate_accuracy(
    arch: &Architecture,
    model: &ParamVector,
    data: &LabeledDataset,
) -> Result<f64> {
    check_model(arch, model)?;
    let refs: Vec<&Sample> = data.samples.iter().collect();
    check_batch(arch, &refs)?;
    let mut ws = Workspace::new(arch);
    let correct = data
        .samples
        .iter()
        .filter(|s| {
            ws.forward(&model.0, &s.features);
            argmax(ws.logits()) == s.label
        })
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Adam with the usual moment constants; moments start at zero.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn shuffled_order<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn check_data(arch: &Architecture, data: &LabeledDataset) -> Result<()> {
    data.validate()?;
    if data.dim() != arch.input_dim {
        return input_err(format!(
            "dataset `{}` has {} features, architecture expects {}",
            data.name,
            data.dim(),
            arch.input_dim
        ));
    }
    Ok(())
}

/// Trains with Adam over per-epoch shuffles seeded by `cfg.seed`. The last
/// partial batch of every epoch is kept.
pub fn train(
    arch: &Architecture,
    model: &ParamVector,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(ParamVector, GradTrace)> {
    cfg.validate()?;
    check_model(arch, model)?;
    check_data(arch, data)?;
    let mut params = model.0.clone();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut ws = Workspace::new(arch);
    let mut rng = util::rng_from(cfg.seed);
    let mut trace = GradTrace::default();
    for _ in 0..cfg.epochs {
        let order = shuffled_order(&mut rng, data.len());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let grad = batch_gradient(&mut ws, &params, &batch);
            adam.step(&mut params, &grad);
            trace.per_batch.push(grad);
        }
    }
    Ok((ParamVector(params), trace))
}

/// One seeded pass over `data` recording batch gradients without ever
/// applying them.
pub fn observe_gradients(
    arch: &Architecture,
    model: &ParamVector,
    data: &LabeledDataset,
    batch_size: usize,
    seed: u64,
) -> Result<GradTrace> {
    if batch_size == 0 {
        return config_err("batch_size must be at least 1");
    }
    check_model(arch, model)?;
    check_data(arch, data)?;
    let mut ws = Workspace::new(arch);
    let mut rng = util::rng_from(seed);
    let order = shuffled_order(&mut rng, data.len());
    let per_batch = order
        .chunks(batch_size)
        .map(|chunk| {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            batch_gradient(&mut ws, &model.0, &batch)
        })
        .collect();
    Ok(GradTrace { per_batch })
}
