//! K-way multinomial logistic regression trained by mini-batch SGD.
//!
//! The objective is the mean softmax cross-entropy (with optional label
//! smoothing) plus `λ/2 · ‖W‖²` on the weight matrix; the bias is not decayed.
//! One SGD step is therefore `W ← W − lr · (∇CE + λ·W)`, the decoupled form.
//!
//! The same SGD driver ([`run_sgd`]) also trains the projection pair in
//! [`crate::matching`].

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::util;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A feature vector the classifier can consume.
pub trait FeatureVector: Sync {
    fn dim(&self) -> usize;
    fn dot(&self, row: &[f64]) -> f64;
    /// Calls `f(index, value)` for every stored entry.
    fn for_each_entry(&self, f: impl FnMut(usize, f64));
    fn all_finite(&self) -> bool;
}

impl FeatureVector for SparseVector {
    fn dim(&self) -> usize {
        SparseVector::dim(self)
    }

    fn dot(&self, row: &[f64]) -> f64 {
        self.iter().map(|(i, v)| row[i] * v).sum()
    }

    fn for_each_entry(&self, mut f: impl FnMut(usize, f64)) {
        for (i, v) in self.iter() {
            f(i, v);
        }
    }

    fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

impl FeatureVector for Vec<f64> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn dot(&self, row: &[f64]) -> f64 {
        self.iter().zip(row).map(|(a, b)| a * b).sum()
    }

    fn for_each_entry(&self, mut f: impl FnMut(usize, f64)) {
        for (i, &v) in self.iter().enumerate() {
            f(i, v);
        }
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    pub label_smoothing: f64,
    /// Heavy-ball momentum; 0 disables it.
    #[serde(default)]
    pub momentum: f64,
}

impl TrainConfig {
    /// Desk-scale defaults for sparse TF-IDF features.
    pub fn desk_sparse() -> Self {
        Self {
            learning_rate: 0.1,
            weight_decay: 1e-4,
            epochs: 20,
            batch_size: 64,
            seed: 0,
            shuffle_each_epoch: true,
            label_smoothing: 0.0,
            momentum: 0.0,
        }
    }

    /// Desk-scale defaults for dense embeddings.
    pub fn desk_dense() -> Self {
        Self {
            learning_rate: 0.01,
            ..Self::desk_sparse()
        }
    }

    /// Hyperparameters of the published caption classifier (AdamW there,
    /// plain SGD here).
    pub fn paper_text() -> Self {
        Self {
            learning_rate: 2e-5,
            weight_decay: 0.01,
            epochs: 3,
            batch_size: 32,
            ..Self::desk_sparse()
        }
    }

    /// Hyperparameters of the published image classifier.
    pub fn paper_image() -> Self {
        Self {
            learning_rate: 5e-4,
            weight_decay: 0.05,
            epochs: 300,
            batch_size: 64,
            label_smoothing: 0.1,
            ..Self::desk_sparse()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.learning_rate * self.weight_decay >= 1.0 {
            return bad("learning_rate * weight_decay must be < 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return bad(format!("label_smoothing must be in [0, 0.5), got {}", self.label_smoothing));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        util::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk_sparse()
    }
}

/// Weight matrix (K×D, row-major) and bias for K-way softmax classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub format_version: u32,
    pub labels: LabelSpace,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(labels: LabelSpace, dim: usize) -> Self {
        let k = labels.len();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            labels,
            dim,
            config_digest: None,
            weights: vec![0.0; k * dim],
            bias: vec![0.0; k],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    fn check_dim<X: FeatureVector>(&self, x: &X) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.dim(),
            });
        }
        Ok(())
    }

    pub fn logits<X: FeatureVector>(&self, x: &X) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked<X: FeatureVector>(&self, x: &X) -> Vec<f64> {
        (0..self.n_classes()).map(|k| x.dot(self.row(k)) + self.bias[k]).collect()
    }

    pub fn predict_proba<X: FeatureVector>(&self, x: &X) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict<X: FeatureVector>(&self, x: &X) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_classes();
        if self.weights.len() != k * self.dim || self.bias.len() != k {
            return Err(Error::Invalid(format!(
                "model shape disagrees with header (K={k}, D={})",
                self.dim
            )));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = util::read_json(path)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!("unsupported model version {}", model.format_version)));
        }
        model.validate()?;
        Ok(model)
    }
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy against the smoothed target and its gradient w.r.t. the
/// logits (`p − q`).
pub fn cross_entropy_grad(logits: &[f64], target: usize, label_smoothing: f64) -> (f64, Vec<f64>) {
    let k = logits.len() as f64;
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (j, &z) in logits.iter().enumerate() {
        let log_p = z - max - log_sum;
        let q = label_smoothing / k + if j == target { 1.0 - label_smoothing } else { 0.0 };
        if q > 0.0 {
            loss -= q * log_p;
        }
        grad.push(log_p.exp() - q);
    }
    (loss, grad)
}

/// Something [`run_sgd`] can optimize.
pub trait SgdObjective {
    /// Applies one update on `batch` (example indices) and returns the mean
    /// data loss over the batch, measured before the update.
    fn step(&mut self, batch: &[usize], learning_rate: f64) -> f64;

    /// Regularization part of the objective at the current parameters.
    fn penalty(&self) -> f64 {
        0.0
    }
}

/// Mini-batch SGD driver. Epoch `e` visits the examples in an order shuffled
/// by a generator seeded from `(seed, e)`. Returns, per epoch, the mean batch
/// loss plus the penalty measured at the start of the epoch; with a single
/// full batch this is exactly the objective at the epoch's starting point.
pub fn run_sgd(objective: &mut impl SgdObjective, n_examples: usize, config: &TrainConfig) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n_examples).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.sort_unstable();
            order.shuffle(&mut util::rng(util::derive_seed(config.seed, &format!("epoch-{epoch}"))));
        }
        let penalty = objective.penalty();
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            total += objective.step(batch, config.learning_rate) * batch.len() as f64;
        }
        let loss = total / n_examples as f64 + penalty;
        log::debug!("epoch {}: loss {loss:.6}", epoch + 1);
        losses.push(loss);
    }
    losses
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Plain SGD state. The weights are stored as `scale · v` so that weight
/// decay costs O(1) per step and sparse examples only touch their columns.
struct ScaledSgd<'a, X> {
    xs: &'a [X],
    ys: &'a [usize],
    k: usize,
    dim: usize,
    v: Vec<f64>,
    scale: f64,
    bias: Vec<f64>,
    weight_decay: f64,
    label_smoothing: f64,
}

impl<X: FeatureVector> ScaledSgd<'_, X> {
    fn logits(&self, x: &X) -> Vec<f64> {
        (0..self.k)
            .map(|c| self.scale * x.dot(&self.v[c * self.dim..(c + 1) * self.dim]) + self.bias[c])
            .collect()
    }

    fn into_weights(self) -> (Vec<f64>, Vec<f64>) {
        let scale = self.scale;
        (self.v.into_iter().map(|w| w * scale).collect(), self.bias)
    }
}

impl<X: FeatureVector> SgdObjective for ScaledSgd<'_, X> {
    fn step(&mut self, batch: &[usize], lr: f64) -> f64 {
        let inv_b = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let grads: Vec<Vec<f64>> = batch
            .iter()
            .map(|&i| {
                let (l, g) = cross_entropy_grad(&self.logits(&self.xs[i]), self.ys[i], self.label_smoothing);
                loss += l;
                g
            })
            .collect();
        self.scale *= 1.0 - lr * self.weight_decay;
        let step = lr * inv_b / self.scale;
        for (&i, g) in batch.iter().zip(&grads) {
            let (v, dim) = (&mut self.v, self.dim);
            self.xs[i].for_each_entry(|j, x| {
                for (c, gc) in g.iter().enumerate() {
                    v[c * dim + j] -= step * gc * x;
                }
            });
            for (b, gc) in self.bias.iter_mut().zip(g) {
                *b -= lr * inv_b * gc;
            }
        }
        if self.scale < 1e-6 {
            let s = self.scale;
            self.v.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
        loss * inv_b
    }

    fn penalty(&self) -> f64 {
        0.5 * self.weight_decay * self.scale * self.scale * self.v.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Heavy-ball momentum on the full objective gradient: `u ← μu + ∇J`,
/// `θ ← θ − lr·u`. Dense updates.
struct MomentumSgd<'a, X> {
    xs: &'a [X],
    ys: &'a [usize],
    model: LinearModel,
    velocity_w: Vec<f64>,
    velocity_b: Vec<f64>,
    momentum: f64,
    weight_decay: f64,
    label_smoothing: f64,
}

impl<X: FeatureVector> SgdObjective for MomentumSgd<'_, X> {
    fn step(&mut self, batch: &[usize], lr: f64) -> f64 {
        let inv_b = 1.0 / batch.len() as f64;
        let dim = self.model.dim;
        let mut gw = vec![0.0; self.model.weights.len()];
        let mut gb = vec![0.0; self.model.bias.len()];
        let mut loss = 0.0;
        for &i in batch {
            let x = &self.xs[i];
            let (l, g) = cross_entropy_grad(&self.model.logits_unchecked(x), self.ys[i], self.label_smoothing);
            loss += l;
            x.for_each_entry(|j, xv| {
                for (c, gc) in g.iter().enumerate() {
                    gw[c * dim + j] += gc * xv * inv_b;
                }
            });
            for (b, gc) in gb.iter_mut().zip(&g) {
                *b += gc * inv_b;
            }
        }
        for ((u, g), w) in self.velocity_w.iter_mut().zip(&gw).zip(self.model.weights.iter_mut()) {
            *u = self.momentum * *u + g + self.weight_decay * *w;
            *w -= lr * *u;
        }
        for ((u, g), b) in self.velocity_b.iter_mut().zip(&gb).zip(self.model.bias.iter_mut()) {
            *u = self.momentum * *u + g;
            *b -= lr * *u;
        }
        loss * inv_b
    }

    fn penalty(&self) -> f64 {
        0.5 * self.weight_decay * self.model.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

fn check_training_data<X: FeatureVector>(xs: &[X], ys: &[usize], labels: &LabelSpace) -> Result<usize> {
    if xs.is_empty() {
        return Err(Error::Empty("no training examples".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::Invalid(format!("{} feature vectors but {} targets", xs.len(), ys.len())));
    }
    let dim = xs[0].dim();
    let mut per_class = vec![0usize; labels.len()];
    for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.dim(),
            });
        }
        if !x.all_finite() {
            return Err(Error::NonFinite(format!("training example {i}")));
        }
        if y >= labels.len() {
            return Err(Error::Invalid(format!("class index {y} out of range for K={}", labels.len())));
        }
        per_class[y] += 1;
    }
    if let Some(empty) = per_class.iter().position(|&c| c == 0) {
        return Err(Error::Empty(format!("class `{}` has no training examples", labels.label(empty))));
    }
    Ok(dim)
}

/// Trains a model from zero initialization. Deterministic in
/// `(xs, ys, config)`.
pub fn train<X: FeatureVector>(
    xs: &[X],
    ys: &[usize],
    labels: &LabelSpace,
    config: &TrainConfig,
) -> Result<(LinearModel, TrainReport)> {
    config.validate()?;
    let dim = check_training_data(xs, ys, labels)?;
    let k = labels.len();
    let (model, epoch_losses) = if config.momentum > 0.0 {
        let mut state = MomentumSgd {
            xs,
            ys,
            model: LinearModel::zeros(labels.clone(), dim),
            velocity_w: vec![0.0; k * dim],
            velocity_b: vec![0.0; k],
            momentum: config.momentum,
            weight_decay: config.weight_decay,
            label_smoothing: config.label_smoothing,
        };
        let losses = run_sgd(&mut state, xs.len(), config);
        (state.model, losses)
    } else {
        let mut state = ScaledSgd {
            xs,
            ys,
            k,
            dim,
            v: vec![0.0; k * dim],
            scale: 1.0,
            bias: vec![0.0; k],
            weight_decay: config.weight_decay,
            label_smoothing: config.label_smoothing,
        };
        let losses = run_sgd(&mut state, xs.len(), config);
        let (weights, bias) = state.into_weights();
        let mut model = LinearModel::zeros(labels.clone(), dim);
        model.weights = weights;
        model.bias = bias;
        (model, losses)
    };
    let mut model = model;
    model.config_digest = Some(config.digest());
    if !model.is_finite() || epoch_losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("training diverged; lower the learning rate".into()));
    }
    Ok((model, TrainReport { epoch_losses }))
}

/// Mean cross-entropy over the batch plus `λ/2 · ‖W‖²`.
pub fn objective<X: FeatureVector>(
    model: &LinearModel,
    xs: &[X],
    ys: &[usize],
    weight_decay: f64,
    label_smoothing: f64,
) -> f64 {
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| cross_entropy_grad(&model.logits_unchecked(x), y, label_smoothing).0)
        .sum::<f64>()
        / xs.len() as f64;
    data + 0.5 * weight_decay * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`objective`]: `(∂J/∂W row-major, ∂J/∂b)`.
pub fn gradient<X: FeatureVector>(
    model: &LinearModel,
    xs: &[X],
    ys: &[usize],
    weight_decay: f64,
    label_smoothing: f64,
) -> (Vec<f64>, Vec<f64>) {
    let dim = model.dim;
    let inv_n = 1.0 / xs.len() as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| weight_decay * w).collect();
    let mut gb = vec![0.0; model.n_classes()];
    for (x, &y) in xs.iter().zip(ys) {
        let (_, g) = cross_entropy_grad(&model.logits_unchecked(x), y, label_smoothing);
        x.for_each_entry(|j, xv| {
            for (c, gc) in g.iter().enumerate() {
                gw[c * dim + j] += gc * xv * inv_n;
            }
        });
        for (b, gc) in gb.iter_mut().zip(&g) {
            *b += gc * inv_n;
        }
    }
    (gw, gb)
}

/// Relative error with an absolute floor, so parameters whose gradient is
/// (near) zero do not amplify round-off.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn param_mut(model: &mut LinearModel, is_bias: bool, idx: usize) -> &mut f64 {
    if is_bias {
        &mut model.bias[idx]
    } else {
        &mut model.weights[idx]
    }
}

/// Compares [`gradient`] to central finite differences on every parameter
/// and returns the largest [`relative_error`].
pub fn grad_check<X: FeatureVector>(
    model: &LinearModel,
    xs: &[X],
    ys: &[usize],
    weight_decay: f64,
    label_smoothing: f64,
    epsilon: f64,
) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Empty("gradient check needs a non-empty batch".into()));
    }
    for x in xs {
        model.check_dim(x)?;
    }
    let (gw, gb) = gradient(model, xs, ys, weight_decay, label_smoothing);
    let mut probe = model.clone();
    let mut central = |is_bias: bool, idx: usize| -> f64 {
        let mut eval_at = |value: f64| {
            *param_mut(&mut probe, is_bias, idx) = value;
            objective(&probe, xs, ys, weight_decay, label_smoothing)
        };
        let original = if is_bias { model.bias[idx] } else { model.weights[idx] };
        let numeric = (eval_at(original + epsilon) - eval_at(original - epsilon)) / (2.0 * epsilon);
        eval_at(original);
        numeric
    };
    let mut worst: f64 = 0.0;
    for (i, &g) in gw.iter().enumerate() {
        worst = worst.max(relative_error(g, central(false, i)));
    }
    for (i, &g) in gb.iter().enumerate() {
        worst = worst.max(relative_error(g, central(true, i)));
    }
    Ok(worst)
}

/// Accuracy summary with a confusion matrix (rows: true class, columns:
/// predicted class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub labels: LabelSpace,
    pub n_test: u64,
    pub overall_accuracy: f64,
    /// `None` for classes absent from the test set.
    pub per_class_accuracy: Vec<Option<f64>>,
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    pub fn from_predictions(labels: &LabelSpace, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Empty("no test examples".into()));
        }
        if truth.len() != predicted.len() {
            return Err(Error::Invalid("truth and prediction lengths differ".into()));
        }
        let k = labels.len();
        let mut confusion = vec![vec![0u64; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(Error::Invalid(format!("class index out of range for K={k}")));
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(labels.clone(), confusion))
    }

    pub fn from_confusion(labels: LabelSpace, confusion: Vec<Vec<u64>>) -> Self {
        let n_test: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect();
        Self {
            labels,
            n_test,
            overall_accuracy: if n_test > 0 { trace as f64 / n_test as f64 } else { 0.0 },
            per_class_accuracy,
            confusion,
        }
    }

    /// Checks the internal invariants (shape, counts, accuracy = trace/total).
    pub fn validate(&self) -> Result<()> {
        let k = self.labels.len();
        if self.confusion.len() != k || self.confusion.iter().any(|r| r.len() != k) || self.per_class_accuracy.len() != k {
            return Err(Error::Invalid("metrics shape disagrees with label space".into()));
        }
        let rebuilt = Metrics::from_confusion(self.labels.clone(), self.confusion.clone());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let per_class_ok = rebuilt
            .per_class_accuracy
            .iter()
            .zip(&self.per_class_accuracy)
            .all(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => close(*a, *b),
                (None, None) => true,
                _ => false,
            });
        if rebuilt.n_test != self.n_test || !close(rebuilt.overall_accuracy, self.overall_accuracy) || !per_class_ok {
            return Err(Error::Invalid("metrics inconsistent with confusion matrix".into()));
        }
        Ok(())
    }

    pub fn chance(&self) -> f64 {
        1.0 / self.labels.len() as f64
    }
}

/// Predicts every example (argmax, ties to the lowest index) and tallies.
pub fn evaluate<X: FeatureVector>(model: &LinearModel, xs: &[X], ys: &[usize]) -> Result<Metrics> {
    if xs.is_empty() {
        return Err(Error::Empty("no test examples".into()));
    }
    let predicted: Vec<usize> = xs.par_iter().map(|x| model.predict(x)).collect::<Result<_>>()?;
    Metrics::from_predictions(&model.labels, ys, &predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn labels(k: usize) -> LabelSpace {
        LabelSpace::new((0..k).map(|i| format!("c{i}"))).unwrap()
    }

    fn random_batch(seed: u64, n: usize, d: usize, k: usize) -> (LinearModel, Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = util::rng(seed);
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let mut model = LinearModel::zeros(labels(k), d);
        model.weights.iter_mut().for_each(|w| *w = normal());
        model.bias.iter_mut().for_each(|b| *b = normal());
        let xs = (0..n).map(|_| (0..d).map(|_| normal()).collect()).collect();
        let ys = (0..n).map(|i| i % k).collect();
        (model, xs, ys)
    }

    #[test]
    fn separable_line_is_learned() {
        let xs: Vec<Vec<f64>> = (0..100).map(|i| vec![if i < 50 { -1.0 } else { 1.0 }]).collect();
        let ys: Vec<usize> = (0..100).map(|i| usize::from(i >= 50)).collect();
        // the sign classifier gets every point right, so full accuracy is attainable
        let sign_acc = xs.iter().zip(&ys).filter(|(x, &y)| usize::from(x[0] > 0.0) == y).count();
        assert_eq!(sign_acc, 100);
        let (model, report) = train(&xs, &ys, &labels(2), &TrainConfig::desk_dense()).unwrap();
        assert_eq!(evaluate(&model, &xs, &ys).unwrap().overall_accuracy, 1.0);
        assert_eq!(report.epoch_losses.len(), 20);
    }

    #[test]
    fn constant_features_give_uniform_predictions() {
        let xs: Vec<Vec<f64>> = vec![vec![1.0, 2.0]; 90];
        let ys: Vec<usize> = (0..90).map(|i| i % 3).collect();
        let config = TrainConfig {
            epochs: 1,
            batch_size: 90,
            ..TrainConfig::desk_dense()
        };
        let (model, _) = train(&xs, &ys, &labels(3), &config).unwrap();
        for p in model.predict_proba(&xs[0]).unwrap() {
            assert!((p - 1.0 / 3.0).abs() < 1e-9);
        }
        let acc = evaluate(&model, &xs, &ys).unwrap().overall_accuracy;
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
        let zero = TrainConfig {
            epochs: 0,
            ..config
        };
        assert!(train(&xs, &ys, &labels(3), &zero).is_err());
    }

    #[test]
    fn training_is_bit_identical_per_seed() {
        let (_, xs, ys) = random_batch(3, 60, 5, 3);
        let cfg = TrainConfig::desk_dense().with_seed(11);
        let (a, ra) = train(&xs, &ys, &labels(3), &cfg).unwrap();
        let (b, rb) = train(&xs, &ys, &labels(3), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let (c, _) = train(&xs, &ys, &labels(3), &cfg.clone().with_seed(12)).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn training_errors() {
        let xs = vec![vec![1.0], vec![f64::NAN]];
        assert!(matches!(
            train(&xs, &[0, 1], &labels(2), &TrainConfig::default()),
            Err(Error::NonFinite(_))
        ));
        let xs = vec![vec![1.0], vec![2.0]];
        assert!(matches!(train(&xs, &[0, 0], &labels(2), &TrainConfig::default()), Err(Error::Empty(_))));
        let xs = vec![vec![1.0], vec![2.0, 1.0]];
        assert!(train(&xs, &[0, 1], &labels(2), &TrainConfig::default()).is_err());
    }

    #[test]
    fn softmax_examples() {
        let zero = LinearModel::zeros(labels(4), 3);
        for p in zero.predict_proba(&vec![1.0, 2.0, 3.0]).unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let mut m = LinearModel::zeros(labels(2), 1);
        m.weights = vec![1.0, -1.0];
        assert_eq!(m.predict_proba(&vec![0.0]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(m.predict_proba(&vec![0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        let p = softmax(&[1000.0, 999.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_check_random_batch() {
        let (model, xs, ys) = random_batch(5, 5, 4, 3);
        let err = grad_check(&model, &xs, &ys, 0.01, 0.1, 1e-5).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
        assert!(grad_check::<Vec<f64>>(&model, &[], &[], 0.0, 0.0, 1e-5).is_err());
    }

    #[test]
    fn weight_decay_gradient_is_lambda_w() {
        let (model, xs, ys) = random_batch(8, 4, 3, 2);
        let (with, _) = gradient(&model, &xs, &ys, 0.3, 0.0);
        let (without, _) = gradient(&model, &xs, &ys, 0.0, 0.0);
        for ((a, b), w) in with.iter().zip(&without).zip(&model.weights) {
            assert!((a - b - 0.3 * w).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_step_matches_checked_gradient() {
        // one full-batch step of the scaled trainer equals θ − lr·∇J at θ = 0
        let (_, xs, ys) = random_batch(9, 12, 4, 3);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 12,
            learning_rate: 0.5,
            weight_decay: 0.1,
            ..TrainConfig::desk_dense()
        };
        let (trained, _) = train(&xs, &ys, &labels(3), &cfg).unwrap();
        let zero = LinearModel::zeros(labels(3), 4);
        let (gw, gb) = gradient(&zero, &xs, &ys, 0.1, 0.0);
        for (w, g) in trained.weights.iter().zip(&gw) {
            assert!((w + 0.5 * g).abs() < 1e-12);
        }
        for (b, g) in trained.bias.iter().zip(&gb) {
            assert!((b + 0.5 * g).abs() < 1e-12);
        }
    }

    #[test]
    fn full_batch_loss_is_monotone() {
        let (_, xs, ys) = random_batch(21, 40, 3, 3);
        for momentum in [0.0] {
            let cfg = TrainConfig {
                epochs: 60,
                batch_size: 40,
                learning_rate: 0.05,
                weight_decay: 0.01,
                momentum,
                ..TrainConfig::desk_dense()
            };
            let (_, report) = train(&xs, &ys, &labels(3), &cfg).unwrap();
            for w in report.epoch_losses.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn momentum_path_learns() {
        let xs: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 3) as f64 - 1.0, 1.0]).collect();
        let ys: Vec<usize> = (0..60).map(|i| usize::from(i % 3 == 2)).collect();
        let cfg = TrainConfig {
            momentum: 0.9,
            learning_rate: 0.05,
            epochs: 50,
            ..TrainConfig::desk_dense()
        };
        let (model, _) = train(&xs, &ys, &labels(2), &cfg).unwrap();
        assert_eq!(evaluate(&model, &xs, &ys).unwrap().overall_accuracy, 1.0);
    }

    #[test]
    fn sparse_and_dense_training_agree() {
        let (_, xs, ys) = random_batch(4, 30, 6, 3);
        let sparse: Vec<SparseVector> = xs
            .iter()
            .map(|x| SparseVector::new(6, x.iter().enumerate().map(|(i, &v)| (i as u32, v)).collect()).unwrap())
            .collect();
        let cfg = TrainConfig::desk_dense();
        let (a, _) = train(&xs, &ys, &labels(3), &cfg).unwrap();
        let (b, _) = train(&sparse, &ys, &labels(3), &cfg).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn metrics_examples() {
        let l = labels(3);
        let m = Metrics::from_predictions(&l, &[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap();
        assert_eq!(m.overall_accuracy, 1.0);
        assert_eq!(m.confusion, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);
        m.validate().unwrap();
        let m = Metrics::from_predictions(&l, &[0, 0, 1], &[0, 1, 1]).unwrap();
        assert_eq!(m.per_class_accuracy, vec![Some(0.5), Some(1.0), None]);
        assert!(Metrics::from_predictions(&l, &[], &[]).is_err());
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn random_model_on_balanced_data_is_near_chance() {
        let (model, _, _) = random_batch(77, 1, 8, 3);
        let (_, xs, _) = random_batch(78, 3000, 8, 3);
        // labels drawn independently of the features
        let mut rng = util::rng(79);
        let ys: Vec<usize> = (0..3000).map(|_| rand::Rng::random_range(&mut rng, 0..3)).collect();
        let acc = evaluate(&model, &xs, &ys).unwrap().overall_accuracy;
        let sigma = (1.0 / 3.0 * 2.0 / 3.0 / 3000.0_f64).sqrt();
        assert!((acc - 1.0 / 3.0).abs() <= 3.0 * sigma, "{acc}");
    }

    #[test]
    fn model_file_round_trip() {
        let (model, _, _) = random_batch(1, 1, 5, 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        model.save(&p).unwrap();
        assert_eq!(LinearModel::load(&p).unwrap(), model);
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(z in proptest::collection::vec(-50.0f64..50.0, 2..6), c in -100.0f64..100.0) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            for (a, b) in p.iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn argmax_invariant_to_positive_scaling(z in proptest::collection::vec(-10.0f64..10.0, 2..6), s in 0.01f64..100.0) {
            let scaled: Vec<f64> = z.iter().map(|v| v * s).collect();
            prop_assert_eq!(argmax(&z), argmax(&scaled));
        }

        #[test]
        fn feature_permutation_equivariance(seed in any::<u64>(), shift in 1usize..4) {
            let (model, xs, _) = random_batch(seed, 6, 4, 3);
            let perm: Vec<usize> = (0..4).map(|i| (i + shift) % 4).collect();
            let mut permuted = model.clone();
            for k in 0..3 {
                for j in 0..4 {
                    permuted.weights[k * 4 + perm[j]] = model.weights[k * 4 + j];
                }
            }
            for x in &xs {
                let mut px = vec![0.0; 4];
                for j in 0..4 {
                    px[perm[j]] = x[j];
                }
                prop_assert_eq!(model.predict(x).unwrap(), permuted.predict(&px).unwrap());
            }
        }
    }
}
