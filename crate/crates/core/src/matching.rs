//! Image-to-caption attribution in a learned shared space.
//!
//! Each generated image is scored against the K sibling captions (same
//! image_id and prompt tier, one per source model) by
//! `cos(P_imgᵀ·e_img, P_textᵀ·e_text) / τ`, and the per-instance K-way
//! softmax is trained with the SGD driver of [`crate::linear`].

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSpace, PromptTier, Side, SplitAssignment};
use crate::error::{Error, Result};
use crate::linear::{self, Metrics, SgdObjective, TrainConfig, TrainReport};
use crate::probe::EmbeddingSet;
use crate::util;

/// Projections into the shared space, stored row-major (`D × d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPair {
    pub text_dim: usize,
    pub image_dim: usize,
    pub shared_dim: usize,
    pub tau: f64,
    pub text: Vec<f64>,
    pub image: Vec<f64>,
}

fn project(p: &[f64], shared: usize, e: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; shared];
    for (row, &x) in p.chunks_exact(shared).zip(e) {
        if x != 0.0 {
            for (o, w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ProjectionPair {
    /// Identity projections (requires `D_t == D_i == d`).
    pub fn identity(dim: usize, tau: f64) -> Result<Self> {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, dim, tau, eye.clone(), eye)
    }

    /// Gaussian initialization with entries `N(0, 1/d)`.
    pub fn random(text_dim: usize, image_dim: usize, shared_dim: usize, tau: f64, seed: u64) -> Result<Self> {
        let scale = 1.0 / (shared_dim as f64).sqrt();
        let draw = |n: usize, key: &str| -> Vec<f64> {
            let mut rng = util::rng(util::derive_seed(seed, key));
            (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect()
        };
        let text = draw(text_dim * shared_dim, "text-projection");
        let image = draw(image_dim * shared_dim, "image-projection");
        Self::new(text_dim, image_dim, shared_dim, tau, text, image)
    }

    pub fn new(text_dim: usize, image_dim: usize, shared_dim: usize, tau: f64, text: Vec<f64>, image: Vec<f64>) -> Result<Self> {
        if shared_dim == 0 {
            return Err(Error::Config("shared dimension must be at least 1".into()));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
        }
        if text.len() != text_dim * shared_dim || image.len() != image_dim * shared_dim {
            return Err(Error::Invalid("projection shape disagrees with dimensions".into()));
        }
        if text.iter().chain(&image).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection entries".into()));
        }
        if shared_dim > text_dim.min(image_dim) {
            log::warn!("shared dimension {shared_dim} exceeds min(D_t={text_dim}, D_i={image_dim})");
        }
        Ok(Self {
            text_dim,
            image_dim,
            shared_dim,
            tau,
            text,
            image,
        })
    }

    /// Candidate scores `cos(u, v_c) / τ`, in candidate order.
    pub fn scores(&self, instance: &MatchInstance) -> Result<Vec<f64>> {
        self.check(instance)?;
        Ok(self.forward(instance).scores)
    }

    fn check(&self, instance: &MatchInstance) -> Result<()> {
        let mismatch = |expected, found| Err(Error::DimensionMismatch { expected, found });
        if instance.image.len() != self.image_dim {
            return mismatch(self.image_dim, instance.image.len());
        }
        if let Some(c) = instance.candidates.iter().find(|c| c.len() != self.text_dim) {
            return mismatch(self.text_dim, c.len());
        }
        Ok(())
    }

    fn forward(&self, instance: &MatchInstance) -> Forward {
        let u = project(&self.image, self.shared_dim, &instance.image);
        let nu = norm(&u).max(f64::MIN_POSITIVE);
        let vs: Vec<Vec<f64>> = instance.candidates.iter().map(|t| project(&self.text, self.shared_dim, t)).collect();
        let nvs: Vec<f64> = vs.iter().map(|v| norm(v).max(f64::MIN_POSITIVE)).collect();
        let cos: Vec<f64> = vs.iter().zip(&nvs).map(|(v, nv)| dot(&u, v) / (nu * nv)).collect();
        let scores = cos.iter().map(|c| c / self.tau).collect();
        Forward {
            u,
            nu,
            vs,
            nvs,
            cos,
            scores,
        }
    }

    pub fn penalty(&self, weight_decay: f64) -> f64 {
        0.5 * weight_decay * self.text.iter().chain(&self.image).map(|w| w * w).sum::<f64>()
    }
}

struct Forward {
    u: Vec<f64>,
    nu: f64,
    vs: Vec<Vec<f64>>,
    nvs: Vec<f64>,
    cos: Vec<f64>,
    scores: Vec<f64>,
}

/// One generated image with its K sibling captions, in label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchInstance {
    pub item_id: String,
    pub image_id: String,
    pub image: Vec<f64>,
    pub candidates: Vec<Vec<f64>>,
    pub true_label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    pub labels: LabelSpace,
    pub instances: Vec<MatchInstance>,
    /// Image embeddings without a complete, unambiguous sibling set.
    pub skipped: usize,
}

fn check_nonzero(v: &[f64], id: &str) -> Result<()> {
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::Invalid(format!("zero embedding for `{id}`")));
    }
    Ok(())
}

/// Builds one instance per image embedding whose caption has a text
/// embedding for every sibling. Image item ids are `<caption_id>#img` or a
/// bare caption id. Siblings must share the caption's variant; a label with
/// zero or several such siblings makes the instance incomplete.
pub fn build_instances(corpus: &Corpus, text: &EmbeddingSet, image: &EmbeddingSet) -> Result<InstanceSet> {
    let labels = corpus.labels();
    let text_index: HashMap<&str, usize> =
        text.records().iter().enumerate().map(|(i, r)| (r.item_id.as_str(), i)).collect();
    let mut siblings: HashMap<(&str, PromptTier), Vec<usize>> = HashMap::new();
    for (i, r) in corpus.records().iter().enumerate() {
        siblings.entry((r.image_id.as_str(), r.prompt_tier)).or_default().push(i);
    }
    let ids = corpus.id_index();
    let built: Vec<Option<MatchInstance>> = image
        .records()
        .par_iter()
        .map(|img| -> Result<Option<MatchInstance>> {
            let caption_id = img.item_id.split_once('#').map_or(img.item_id.as_str(), |(s, _)| s);
            let Some(&ci) = ids.get(img.item_id.as_str()).or_else(|| ids.get(caption_id)) else {
                return Ok(None);
            };
            let caption = &corpus.records()[ci];
            let mut slots: Vec<Option<usize>> = vec![None; labels.len()];
            for &si in &siblings[&(caption.image_id.as_str(), caption.prompt_tier)] {
                let s = &corpus.records()[si];
                if s.variant != caption.variant {
                    continue;
                }
                let k = labels.require(&s.source_label)?;
                if slots[k].is_some() {
                    return Ok(None);
                }
                slots[k] = Some(si);
            }
            let mut candidates = Vec::with_capacity(labels.len());
            for slot in slots {
                let Some(&ti) = slot.and_then(|si| text_index.get(corpus.records()[si].caption_id.as_str())) else {
                    return Ok(None);
                };
                let t = &text.records()[ti];
                check_nonzero(&t.embedding, &t.item_id)?;
                candidates.push(t.embedding.clone());
            }
            check_nonzero(&img.embedding, &img.item_id)?;
            Ok(Some(MatchInstance {
                item_id: img.item_id.clone(),
                image_id: caption.image_id.clone(),
                image: img.embedding.clone(),
                candidates,
                true_label: labels.require(&caption.source_label)?,
            }))
        })
        .collect::<Result<_>>()?;
    let skipped = built.iter().filter(|b| b.is_none()).count();
    let instances: Vec<MatchInstance> = built.into_iter().flatten().collect();
    if instances.is_empty() {
        return Err(Error::Empty(format!("no complete match instances ({skipped} skipped)")));
    }
    Ok(InstanceSet {
        labels: labels.clone(),
        instances,
        skipped,
    })
}

impl InstanceSet {
    /// Partitions by image_id through a grouped split.
    pub fn partition(&self, split: &SplitAssignment) -> Result<(Vec<MatchInstance>, Vec<MatchInstance>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for inst in &self.instances {
            match split.side(&inst.image_id) {
                Some(Side::Train) => train.push(inst.clone()),
                Some(Side::Test) => test.push(inst.clone()),
                None => return Err(Error::UnknownId(inst.image_id.clone())),
            }
        }
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub shared_dim: usize,
    pub tau: f64,
    pub train: TrainConfig,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            shared_dim: 128,
            tau: 0.07,
            train: TrainConfig {
                learning_rate: 0.05,
                weight_decay: 1e-4,
                ..TrainConfig::desk_dense()
            },
        }
    }
}

/// Instance loss and its gradient with respect to both projections.
fn loss_grad(pair: &ProjectionPair, inst: &MatchInstance, label_smoothing: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let f = pair.forward(inst);
    let (loss, g) = linear::cross_entropy_grad(&f.scores, inst.true_label, label_smoothing);
    let d = pair.shared_dim;
    let mut du = vec![0.0; d];
    let mut gt = vec![0.0; pair.text.len()];
    for (c, v) in f.vs.iter().enumerate() {
        let gc = g[c] / pair.tau;
        for j in 0..d {
            du[j] += gc * (v[j] / f.nvs[c] - f.cos[c] * f.u[j] / f.nu) / f.nu;
        }
        // dL/dv_c, pushed back through P_text
        let dv: Vec<f64> = (0..d).map(|j| gc * (f.u[j] / f.nu - f.cos[c] * v[j] / f.nvs[c]) / f.nvs[c]).collect();
        for (row, &x) in gt.chunks_exact_mut(d).zip(&inst.candidates[c]) {
            if x != 0.0 {
                row.iter_mut().zip(&dv).for_each(|(w, g)| *w += x * g);
            }
        }
    }
    let mut gi = vec![0.0; pair.image.len()];
    for (row, &x) in gi.chunks_exact_mut(d).zip(&inst.image) {
        if x != 0.0 {
            row.iter_mut().zip(&du).for_each(|(w, g)| *w += x * g);
        }
    }
    (loss, gt, gi)
}

/// Mean instance loss plus `λ/2 · (‖P_text‖² + ‖P_img‖²)`.
pub fn match_objective(pair: &ProjectionPair, instances: &[MatchInstance], weight_decay: f64) -> f64 {
    let data: f64 = instances
        .iter()
        .map(|i| linear::cross_entropy_grad(&pair.forward(i).scores, i.true_label, 0.0).0)
        .sum::<f64>()
        / instances.len() as f64;
    data + pair.penalty(weight_decay)
}

/// Analytic gradient of [`match_objective`]: `(∂/∂P_text, ∂/∂P_img)`.
pub fn match_gradient(pair: &ProjectionPair, instances: &[MatchInstance], weight_decay: f64) -> (Vec<f64>, Vec<f64>) {
    let inv = 1.0 / instances.len() as f64;
    let mut gt: Vec<f64> = pair.text.iter().map(|w| weight_decay * w).collect();
    let mut gi: Vec<f64> = pair.image.iter().map(|w| weight_decay * w).collect();
    for inst in instances {
        let (_, t, i) = loss_grad(pair, inst, 0.0);
        gt.iter_mut().zip(&t).for_each(|(a, b)| *a += b * inv);
        gi.iter_mut().zip(&i).for_each(|(a, b)| *a += b * inv);
    }
    (gt, gi)
}

struct MatchSgd<'a> {
    instances: &'a [MatchInstance],
    pair: ProjectionPair,
    weight_decay: f64,
    label_smoothing: f64,
}

impl SgdObjective for MatchSgd<'_> {
    fn step(&mut self, batch: &[usize], lr: f64) -> f64 {
        let inv = 1.0 / batch.len() as f64;
        let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = batch
            .par_iter()
            .map(|&i| loss_grad(&self.pair, &self.instances[i], self.label_smoothing))
            .collect();
        let decay = 1.0 - lr * self.weight_decay;
        self.pair.text.iter_mut().for_each(|w| *w *= decay);
        self.pair.image.iter_mut().for_each(|w| *w *= decay);
        let mut loss = 0.0;
        for (l, gt, gi) in &parts {
            loss += l;
            self.pair.text.iter_mut().zip(gt).for_each(|(w, g)| *w -= lr * inv * g);
            self.pair.image.iter_mut().zip(gi).for_each(|(w, g)| *w -= lr * inv * g);
        }
        loss * inv
    }

    fn penalty(&self) -> f64 {
        self.pair.penalty(self.weight_decay)
    }
}

/// Trains both projections from a seeded Gaussian initialization.
pub fn train_match(instances: &[MatchInstance], labels: &LabelSpace, config: &MatchConfig) -> Result<(ProjectionPair, TrainReport)> {
    config.train.validate()?;
    let Some(first) = instances.first() else {
        return Err(Error::Empty("no training instances".into()));
    };
    let mut per_class = vec![0usize; labels.len()];
    for inst in instances {
        if inst.candidates.len() != labels.len() || inst.true_label >= labels.len() {
            return Err(Error::Invalid(format!("instance `{}` does not have K={} candidates", inst.item_id, labels.len())));
        }
        per_class[inst.true_label] += 1;
        check_nonzero(&inst.image, &inst.item_id)?;
        for c in &inst.candidates {
            check_nonzero(c, &inst.item_id)?;
        }
    }
    if let Some(k) = per_class.iter().position(|&n| n == 0) {
        return Err(Error::Empty(format!("no instance has true label `{}`", labels.label(k))));
    }
    let pair = ProjectionPair::random(first.candidates[0].len(), first.image.len(), config.shared_dim, config.tau, config.train.seed)?;
    for inst in instances {
        pair.check(inst)?;
    }
    let mut state = MatchSgd {
        instances,
        pair,
        weight_decay: config.train.weight_decay,
        label_smoothing: config.train.label_smoothing,
    };
    let epoch_losses = linear::run_sgd(&mut state, instances.len(), &config.train);
    let pair = state.pair;
    if pair.text.iter().chain(&pair.image).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection training diverged".into()));
    }
    Ok((pair, TrainReport { epoch_losses }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub predicted: usize,
    pub scores: Vec<f64>,
}

pub fn attribute(pair: &ProjectionPair, instance: &MatchInstance) -> Result<Attribution> {
    let scores = pair.scores(instance)?;
    Ok(Attribution {
        predicted: linear::argmax(&scores),
        scores,
    })
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub metrics: Metrics,
    /// Counts of the softmax probability assigned to the true caption, in
    /// ten equal-width bins over [0, 1].
    pub true_prob_histogram: Vec<u64>,
    pub skipped: usize,
    pub shared_dim: usize,
    pub tau: f64,
}

pub fn evaluate_match(pair: &ProjectionPair, instances: &[MatchInstance], labels: &LabelSpace, skipped: usize) -> Result<MatchReport> {
    if instances.is_empty() {
        return Err(Error::Empty("no test instances".into()));
    }
    let results: Vec<Attribution> = instances.par_iter().map(|i| attribute(pair, i)).collect::<Result<_>>()?;
    let truth: Vec<usize> = instances.iter().map(|i| i.true_label).collect();
    let predicted: Vec<usize> = results.iter().map(|a| a.predicted).collect();
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for (a, &t) in results.iter().zip(&truth) {
        let p = linear::softmax(&a.scores)[t];
        histogram[((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(MatchReport {
        metrics: Metrics::from_predictions(labels, &truth, &predicted)?,
        true_prob_histogram: histogram,
        skipped,
        shared_dim: pair.shared_dim,
        tau: pair.tau,
    })
}
