//! Linear probes over precomputed embeddings.
//!
//! Image-derived ids are `<caption_id>#img`; original (non-generated) images
//! are `<image_id>#orig`. Both resolve to the image_id of their split group.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSpace, Side, SplitAssignment};
use crate::error::{Error, Result};
use crate::linear::{self, LinearModel, Metrics, TrainConfig, TrainReport};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub item_id: String,
    pub source_label: String,
    pub encoder_tag: String,
    #[serde(default)]
    pub generator_tag: Option<String>,
    pub embedding: Vec<f64>,
}

/// A validated embedding file: uniform dimension, finite entries, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    records: Vec<EmbeddingRecord>,
    labels: LabelSpace,
    dim: usize,
    normalized: bool,
}

fn unit_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

impl EmbeddingSet {
    /// Validates records in order; `line_of(i)` names the position used in
    /// error messages.
    fn build(
        mut records: Vec<EmbeddingRecord>,
        normalize: bool,
        labels: Option<LabelSpace>,
        at: impl Fn(usize, String) -> Error,
    ) -> Result<Self> {
        let Some(first) = records.first() else {
            return Err(Error::Empty("embedding set has no records".into()));
        };
        let dim = first.embedding.len();
        if dim == 0 {
            return Err(at(0, "empty embedding vector".into()));
        }
        let mut seen = HashSet::new();
        for (i, r) in records.iter_mut().enumerate() {
            if r.embedding.len() != dim {
                return Err(at(i, format!("dimension {} differs from {dim}", r.embedding.len())));
            }
            if r.embedding.iter().any(|x| !x.is_finite()) {
                return Err(at(i, format!("non-finite entry in `{}`", r.item_id)));
            }
            if !seen.insert(r.item_id.clone()) {
                return Err(at(i, format!("duplicate item_id `{}`", r.item_id)));
            }
            if normalize && !unit_normalize(&mut r.embedding) {
                return Err(at(i, format!("zero vector `{}` cannot be normalized", r.item_id)));
            }
        }
        let labels = match labels {
            Some(l) => l,
            None => LabelSpace::sorted(records.iter().map(|r| r.source_label.as_str()))?,
        };
        for (i, r) in records.iter().enumerate() {
            if labels.index_of(&r.source_label).is_none() {
                return Err(at(i, format!("unknown label `{}`", r.source_label)));
            }
        }
        Ok(Self {
            records,
            labels,
            dim,
            normalized: normalize,
        })
    }

    pub fn from_records(records: Vec<EmbeddingRecord>, normalize: bool, labels: Option<LabelSpace>) -> Result<Self> {
        Self::build(records, normalize, labels, |i, m| Error::Invalid(format!("record {i}: {m}")))
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn get(&self, item_id: &str) -> Option<&EmbeddingRecord> {
        self.records.iter().find(|r| r.item_id == item_id)
    }

    /// Distinct tags, sorted.
    pub fn encoder_tags(&self) -> Vec<String> {
        distinct(self.records.iter().map(|r| r.encoder_tag.clone()))
    }

    pub fn generator_tags(&self) -> Vec<String> {
        distinct(self.records.iter().filter_map(|r| r.generator_tag.clone()))
    }

    /// Records with the given generator tag, as a new set over the same
    /// label space.
    pub fn filter_generator(&self, tag: &str) -> Result<Self> {
        let records = self
            .records
            .iter()
            .filter(|r| r.generator_tag.as_deref() == Some(tag))
            .cloned()
            .collect();
        Self::from_records(records, false, Some(self.labels.clone())).map(|mut s| {
            s.normalized = self.normalized;
            s
        })
    }

    /// Adds original-image embeddings as an extra class. The originals are
    /// relabeled to `original_label`.
    pub fn with_originals(&self, originals: Vec<EmbeddingRecord>, original_label: &str) -> Result<Self> {
        if originals.is_empty() {
            return Err(Error::Empty("no original-image embeddings".into()));
        }
        let labels = self.labels.extended(original_label)?;
        let mut records = self.records.clone();
        records.extend(originals.into_iter().map(|r| EmbeddingRecord {
            source_label: original_label.to_string(),
            ..r
        }));
        Self::from_records(records, self.normalized, Some(labels))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        util::write_jsonl(path, &self.records)
    }
}

fn distinct(it: impl Iterator<Item = String>) -> Vec<String> {
    it.collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn load_embeddings(path: &Path, normalize: bool, labels: Option<LabelSpace>) -> Result<EmbeddingSet> {
    let lines: Vec<(usize, EmbeddingRecord)> = util::read_jsonl(path)?;
    let line_numbers: Vec<usize> = lines.iter().map(|(n, _)| *n).collect();
    let records = lines.into_iter().map(|(_, r)| r).collect();
    EmbeddingSet::build(records, normalize, labels, |i, message| Error::Parse {
        path: path.to_path_buf(),
        line: line_numbers.get(i).copied().unwrap_or(0),
        message,
    })
}

/// How item ids map to split groups.
#[derive(Debug, Clone, Copy)]
pub enum Grouping<'a> {
    /// Resolve through a caption corpus: caption ids and `<caption_id>#...`
    /// map to the caption's image_id; otherwise `<image_id>#...` or a bare
    /// image_id is accepted.
    Corpus(&'a Corpus),
    /// The item id with any `#suffix` removed is the group.
    ItemId,
}

impl Grouping<'_> {
    pub fn group_of(&self, item_id: &str) -> Result<String> {
        let stem = item_id.split_once('#').map_or(item_id, |(s, _)| s);
        match self {
            Grouping::ItemId => Ok(stem.to_string()),
            Grouping::Corpus(corpus) => {
                if let Some(r) = corpus.get(item_id).or_else(|| corpus.get(stem)) {
                    return Ok(r.image_id.clone());
                }
                if corpus.image_ids().contains(stem) {
                    return Ok(stem.to_string());
                }
                Err(Error::UnknownId(item_id.to_string()))
            }
        }
    }
}

/// Splits a set into (train, test) record indices by the split of each
/// item's group. Each side is ordered by item_id, so downstream training does
/// not depend on file order.
pub fn split_embeddings(set: &EmbeddingSet, split: &SplitAssignment, grouping: Grouping) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in set.records.iter().enumerate() {
        let group = grouping.group_of(&r.item_id)?;
        match split.side(&group) {
            Some(Side::Train) => train.push(i),
            Some(Side::Test) => test.push(i),
            None => return Err(Error::UnknownId(format!("{} (group {group} not in split)", r.item_id))),
        }
    }
    let by_id = |v: &mut Vec<usize>| v.sort_by(|&a, &b| set.records[a].item_id.cmp(&set.records[b].item_id));
    by_id(&mut train);
    by_id(&mut test);
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub encoder_tags: Vec<String>,
    pub generator_tags: Vec<String>,
    pub normalized: bool,
    pub n_train: usize,
    pub metrics: Metrics,
    pub epoch_losses: Vec<f64>,
}

fn gather(set: &EmbeddingSet, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    idx.iter()
        .map(|&i| {
            let r = &set.records[i];
            (r.embedding.clone(), set.labels.index_of(&r.source_label).expect("validated label"))
        })
        .unzip()
}

/// Trains a linear probe on the train side and evaluates on the test side.
pub fn probe_train_eval(
    set: &EmbeddingSet,
    split: &SplitAssignment,
    grouping: Grouping,
    config: &TrainConfig,
) -> Result<(LinearModel, ProbeReport)> {
    let (train_idx, test_idx) = split_embeddings(set, split, grouping)?;
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Empty(format!(
            "split side is empty ({} train, {} test)",
            train_idx.len(),
            test_idx.len()
        )));
    }
    let (xs, ys) = gather(set, &train_idx);
    let (model, TrainReport { epoch_losses }) = linear::train(&xs, &ys, &set.labels, config)?;
    let (tx, ty) = gather(set, &test_idx);
    let metrics = linear::evaluate(&model, &tx, &ty)?;
    let report = ProbeReport {
        encoder_tags: set.encoder_tags(),
        generator_tags: set.generator_tags(),
        normalized: set.normalized,
        n_train: train_idx.len(),
        metrics,
        epoch_losses,
    };
    Ok((model, report))
}

/// Text-side and image-side metrics for one prompt variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionPair {
    pub text: Metrics,
    pub image: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordComparison {
    pub labels: LabelSpace,
    pub raw: AttributionPair,
    pub keyword: AttributionPair,
    /// keyword − raw, overall accuracy.
    pub delta_text: f64,
    pub delta_image: f64,
    pub raw_gap: f64,
    pub keyword_gap: f64,
}

pub fn keyword_comparison(raw: AttributionPair, keyword: AttributionPair) -> Result<KeywordComparison> {
    let labels = raw.text.labels.clone();
    for (name, m) in [("raw image", &raw.image), ("keyword text", &keyword.text), ("keyword image", &keyword.image)] {
        if m.labels != labels {
            return Err(Error::LabelMismatch(format!("{name} metrics use [{}], expected [{labels}]", m.labels)));
        }
    }
    Ok(KeywordComparison {
        delta_text: keyword.text.overall_accuracy - raw.text.overall_accuracy,
        delta_image: keyword.image.overall_accuracy - raw.image.overall_accuracy,
        raw_gap: raw.text.overall_accuracy - raw.image.overall_accuracy,
        keyword_gap: keyword.text.overall_accuracy - keyword.image.overall_accuracy,
        labels,
        raw,
        keyword,
    })
}
