// SPDX-License-Identifier: MIT OR Apache-2.0

//! Linear softmax probes: prediction, cross-entropy, analytic gradients and
//! training by gradient descent or Adam.
//!
//! A probe maps an activation `h ∈ R^d` to `softmax(W h + b)` with
//! `W ∈ R^{C×d}` and `b ∈ R^C`. The training objective is the mean negative
//! log-likelihood over a batch plus an optional `(λ/2)·‖W‖²` term.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::task::Task;

pub const PROBE_FORMAT_VERSION: u32 = 1;

/// A point on the probability simplex. Entries are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates positivity and normalization (within 1e-6).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidValue("empty probability vector".into()));
        }
        if p.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::InvalidValue(format!(
                "probability vector has non-positive entries: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidValue(format!(
                "probability vector sums to {sum}"
            )));
        }
        Ok(ProbVector(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax; entries are floored at the smallest positive
/// normal so the result stays strictly positive.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p = (*p / sum).max(f64::MIN_POSITIVE);
    }
    out
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    pub task: Task,
    pub class_names: Vec<String>,
    pub layer_index: u32,
    pub model_id: String,
    d: usize,
    /// `C × d`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ProbeModel {
    /// All-zero probe, which predicts the uniform distribution.
    pub fn zeros(task: Task, d: usize, layer_index: u32, model_id: impl Into<String>) -> Self {
        let c = task.num_classes();
        ProbeModel {
            task,
            class_names: task.class_names(),
            layer_index,
            model_id: model_id.into(),
            d,
            weights: vec![0.0; c * d],
            bias: vec![0.0; c],
        }
    }

    pub fn with_params(task: Task, d: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let probe = ProbeModel {
            task,
            class_names: task.class_names(),
            layer_index: 0,
            model_id: String::new(),
            d,
            weights,
            bias,
        };
        probe.validate()?;
        Ok(probe)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.task.num_classes();
        if self.d == 0 {
            return Err(Error::InvalidValue(
                "probe dimension must be positive".into(),
            ));
        }
        if self.bias.len() != c {
            return Err(Error::InvalidValue(format!(
                "task {} needs {c} classes, bias has {}",
                self.task,
                self.bias.len()
            )));
        }
        if self.weights.len() != c * self.d {
            return Err(Error::InvalidValue(format!(
                "weights have {} entries, expected {c} × {}",
                self.weights.len(),
                self.d
            )));
        }
        if self.class_names.len() != c {
            return Err(Error::InvalidValue(format!(
                "{} class names for {c} classes",
                self.class_names.len()
            )));
        }
        if self
            .weights
            .iter()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidValue("non-finite probe parameter".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight_row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.d..(class + 1) * self.d]
    }

    fn check_input(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: h.len(),
            });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite probe input".into()));
        }
        Ok(())
    }

    fn logits_unchecked(&self, h: &[f64]) -> Vec<f64> {
        self.bias
            .iter()
            .enumerate()
            .map(|(c, &b)| {
                b + self
                    .weight_row(c)
                    .iter()
                    .zip(h)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
            })
            .collect()
    }

    /// `W h + b`.
    pub fn logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_input(h)?;
        Ok(self.logits_unchecked(h))
    }
}

/// Class probabilities `softmax(W h + b)`.
pub fn predict(probe: &ProbeModel, h: &[f64]) -> Result<ProbVector> {
    let z = probe.logits(h)?;
    Ok(ProbVector(softmax(&z)))
}

/// [`predict`] on an `f32` activation row.
pub fn predict_row(probe: &ProbeModel, row: &[f32]) -> Result<ProbVector> {
    let h: Vec<f64> = row.iter().map(|&v| f64::from(v)).collect();
    predict(probe, &h)
}

/// Cross-entropy `−log p_y`, computed from log-sum-exp.
pub fn nll(probe: &ProbeModel, h: &[f64], y: usize) -> Result<f64> {
    let z = probe.logits(h)?;
    if y >= z.len() {
        return Err(Error::InvalidValue(format!(
            "class {y} out of range for {} classes",
            z.len()
        )));
    }
    Ok((log_sum_exp(&z) - z[y]).max(0.0))
}

fn check_batch(probe: &ProbeModel, data: &Dataset) -> Result<()> {
    if data.dim() != probe.d {
        return Err(Error::DimensionMismatch {
            expected: probe.d,
            actual: data.dim(),
        });
    }
    if data.num_classes() != probe.num_classes() {
        return Err(Error::InvalidValue(format!(
            "dataset has {} classes, probe has {}",
            data.num_classes(),
            probe.num_classes()
        )));
    }
    Ok(())
}

fn mean_nll_on(probe: &ProbeModel, data: &Dataset, idx: &[usize]) -> f64 {
    let total: f64 = idx
        .iter()
        .map(|&i| {
            let z = probe.logits_unchecked(data.x(i));
            log_sum_exp(&z) - z[data.label(i)]
        })
        .sum();
    total / idx.len() as f64
}

fn penalty(probe: &ProbeModel, l2: f64) -> f64 {
    if l2 == 0.0 {
        0.0
    } else {
        0.5 * l2 * probe.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Mean cross-entropy over the batch plus the L2 term.
pub fn objective(probe: &ProbeModel, batch: &Dataset, l2_penalty: f64) -> Result<f64> {
    check_batch(probe, batch)?;
    if batch.is_empty() {
        return Err(Error::InvalidValue("empty batch".into()));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    Ok(mean_nll_on(probe, batch, &idx) + penalty(probe, l2_penalty))
}

/// Gradient of [`objective`] with respect to `W` (row-major) and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn gradients_on(probe: &ProbeModel, data: &Dataset, idx: &[usize], l2: f64) -> Gradients {
    let (c, d) = (probe.num_classes(), probe.d);
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    for &i in idx {
        let h = data.x(i);
        let mut p = softmax(&probe.logits_unchecked(h));
        p[data.label(i)] -= 1.0;
        for (k, &err) in p.iter().enumerate() {
            gb[k] += err;
            for (g, &x) in gw[k * d..(k + 1) * d].iter_mut().zip(h) {
                *g += err * x;
            }
        }
    }
    let scale = 1.0 / idx.len() as f64;
    for (g, &w) in gw.iter_mut().zip(&probe.weights) {
        *g = *g * scale + l2 * w;
    }
    for g in &mut gb {
        *g *= scale;
    }
    Gradients {
        weights: gw,
        bias: gb,
    }
}

/// Analytic gradients: per example `∂/∂z = softmax(z) − onehot(y)`, so
/// `dW = mean((p − e_y) hᵀ) + λW` and `db = mean(p − e_y)`.
pub fn gradients(probe: &ProbeModel, batch: &Dataset, l2_penalty: f64) -> Result<Gradients> {
    check_batch(probe, batch)?;
    if batch.is_empty() {
        return Err(Error::InvalidValue("empty batch".into()));
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    Ok(gradients_on(probe, batch, &idx, l2_penalty))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain gradient descent, `θ ← θ − η ∇`.
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
            epochs: 200,
            batch_size: None,
            seed: 0,
            l2_penalty: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidValue("epochs must be at least 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidValue("batch size must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidValue(
                "l2 penalty must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub probe: ProbeModel,
    /// Full-dataset objective after each epoch.
    pub loss_curve: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

/// Trains a zero-initialized probe on `data`.
///
/// Mini-batch order is drawn from a ChaCha8 stream seeded with
/// `config.seed`, so repeated runs are bit-identical.
pub fn train(data: &Dataset, task: Task, config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    if data.num_classes() != task.num_classes() {
        return Err(Error::InvalidValue(format!(
            "task {task} needs {} classes, dataset has {}",
            task.num_classes(),
            data.num_classes()
        )));
    }
    if data.is_empty() {
        return Err(Error::NoExamples { skipped: 0 });
    }
    let mut probe = ProbeModel::zeros(
        task,
        data.dim(),
        data.layer.unwrap_or(0),
        data.model_id.clone().unwrap_or_default(),
    );
    let n = data.len();
    let n_params = probe.weights.len() + probe.bias.len();
    let mut adam = AdamState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        step: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch_size.unwrap_or(n).min(n);
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let g = gradients_on(&probe, data, chunk, config.l2_penalty);
            apply_step(&mut probe, &g, config, &mut adam);
        }
        let all: Vec<usize> = (0..n).collect();
        let loss = mean_nll_on(&probe, data, &all) + penalty(&probe, config.l2_penalty);
        if !loss.is_finite() || probe.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        curve.push(loss);
    }
    Ok(Trained {
        probe,
        loss_curve: curve,
    })
}

fn apply_step(probe: &mut ProbeModel, g: &Gradients, config: &TrainConfig, adam: &mut AdamState) {
    let lr = config.learning_rate;
    let params = probe.weights.iter_mut().chain(probe.bias.iter_mut());
    let grads = g.weights.iter().chain(&g.bias);
    match config.optimizer {
        Optimizer::Sgd => {
            for (p, &gi) in params.zip(grads) {
                *p -= lr * gi;
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            adam.step += 1;
            let c1 = 1.0 - beta1.powi(adam.step);
            let c2 = 1.0 - beta2.powi(adam.step);
            for (((p, &gi), m), v) in params.zip(grads).zip(&mut adam.m).zip(&mut adam.v) {
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn accuracy(probe: &ProbeModel, data: &Dataset) -> Result<f64> {
    check_batch(probe, data)?;
    if data.is_empty() {
        return Err(Error::InvalidValue("empty dataset".into()));
    }
    let correct = (0..data.len())
        .filter(|&i| argmax(&probe.logits_unchecked(data.x(i))) == data.label(i))
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Serialize, Deserialize)]
struct ProbeFile {
    format_version: u32,
    task: String,
    class_names: Vec<String>,
    layer_index: u32,
    model_id: String,
    d: usize,
    #[serde(rename = "C")]
    c: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Serializes a probe as pretty-printed JSON. Floats round-trip exactly.
pub fn save_probe(probe: &ProbeModel) -> Result<Vec<u8>> {
    probe.validate()?;
    let file = ProbeFile {
        format_version: PROBE_FORMAT_VERSION,
        task: probe.task.to_string(),
        class_names: probe.class_names.clone(),
        layer_index: probe.layer_index,
        model_id: probe.model_id.clone(),
        d: probe.d,
        c: probe.num_classes(),
        w: probe.weights.clone(),
        b: probe.bias.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&file)?;
    out.push(b'\n');
    Ok(out)
}

pub fn load_probe(bytes: &[u8]) -> Result<ProbeModel> {
    let file: ProbeFile = serde_json::from_slice(bytes)?;
    if file.format_version != PROBE_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: file.format_version,
            supported: PROBE_FORMAT_VERSION,
        });
    }
    let task: Task = file.task.parse()?;
    if file.c != task.num_classes() {
        return Err(Error::InvalidValue(format!(
            "task {task} requires C = {}, file declares C = {}",
            task.num_classes(),
            file.c
        )));
    }
    if file.d.checked_mul(file.c) != Some(file.w.len()) {
        return Err(Error::InvalidValue(format!(
            "W has {} entries, expected C·d = {}·{}",
            file.w.len(),
            file.c,
            file.d
        )));
    }
    let probe = ProbeModel {
        task,
        class_names: file.class_names,
        layer_index: file.layer_index,
        model_id: file.model_id,
        d: file.d,
        weights: file.w,
        bias: file.b,
    };
    probe.validate()?;
    Ok(probe)
}
