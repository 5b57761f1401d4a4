//! Caption corpora: records, label spaces, JSONL I/O and the grouped
//! train/test split.
//!
//! A corpus is a list of [`CaptionRecord`]s plus the [`LabelSpace`] that fixes
//! the class index of every source model. Records of one image (all prompt
//! tiers, all models, all derived variants) always land on the same side of a
//! split.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTier {
    Coarse,
    Detailed,
    VeryDetailed,
}

impl PromptTier {
    pub const ALL: [PromptTier; 3] = [PromptTier::Coarse, PromptTier::Detailed, PromptTier::VeryDetailed];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptTier::Coarse => "coarse",
            PromptTier::Detailed => "detailed",
            PromptTier::VeryDetailed => "very_detailed",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Raw,
    Keyword,
    Paraphrase,
    Transformed,
}

/// One caption with its source model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub image_id: String,
    pub prompt_tier: PromptTier,
    pub source_label: String,
    pub text: String,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl CaptionRecord {
    fn validate(&self) -> Result<()> {
        if self.caption_id.is_empty() {
            return Err(Error::Invalid("empty caption_id".into()));
        }
        if self.image_id.is_empty() {
            return Err(Error::Invalid(format!("caption `{}` has an empty image_id", self.caption_id)));
        }
        if self.variant == Variant::Raw && self.text.trim().is_empty() {
            return Err(Error::Invalid(format!("caption `{}` has empty text", self.caption_id)));
        }
        Ok(())
    }
}

/// Ordered, duplicate-free list of class labels. Position = class index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for l in &labels {
            if l.is_empty() {
                return Err(Error::Invalid("empty label".into()));
            }
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateId(l.clone()));
            }
        }
        if labels.len() < 2 {
            return Err(Error::Invalid(format!(
                "a label space needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        Ok(Self { labels })
    }

    /// Label space made of the distinct labels, sorted lexicographically.
    pub fn sorted<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        Self::new(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// New space with `label` appended as the last class.
    pub fn extended(&self, label: &str) -> Result<Self> {
        if self.index_of(label).is_some() {
            return Err(Error::LabelCollision(label.to_string()));
        }
        let mut labels = self.labels.clone();
        labels.push(label.to_string());
        Self::new(labels)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.labels
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.labels.join(", "))
    }
}

/// An immutable, validated set of caption records.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<CaptionRecord>,
    labels: LabelSpace,
}

impl Corpus {
    /// Validates and NFC-normalizes `records`. When `labels` is `None` the
    /// label space is the sorted set of distinct source labels.
    pub fn new(records: Vec<CaptionRecord>, labels: Option<LabelSpace>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("corpus has no records".into()));
        }
        let labels = match labels {
            Some(l) => l,
            None => LabelSpace::sorted(records.iter().map(|r| r.source_label.as_str()))?,
        };
        let mut ids = HashSet::with_capacity(records.len());
        let mut normalized = Vec::with_capacity(records.len());
        for mut r in records {
            r.text = r.text.nfc().collect();
            r.validate()?;
            labels.require(&r.source_label)?;
            if !ids.insert(r.caption_id.clone()) {
                return Err(Error::DuplicateId(r.caption_id));
            }
            normalized.push(r);
        }
        Ok(Self {
            records: normalized,
            labels,
        })
    }

    pub fn records(&self) -> &[CaptionRecord] {
        &self.records
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Class index of every record, in record order.
    pub fn targets(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| self.labels.index_of(&r.source_label).expect("validated at construction"))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for t in self.targets() {
            counts[t] += 1;
        }
        counts
    }

    pub fn image_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.image_id.as_str()).collect()
    }

    pub fn get(&self, caption_id: &str) -> Option<&CaptionRecord> {
        self.records.iter().find(|r| r.caption_id == caption_id)
    }

    /// caption_id → record index.
    pub fn id_index(&self) -> std::collections::HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.caption_id.as_str(), i))
            .collect()
    }

    /// Same label space, records replaced by `f` applied to each.
    pub fn map_records(&self, f: impl Fn(&CaptionRecord) -> CaptionRecord + Sync + Send) -> Result<Corpus> {
        use rayon::prelude::*;
        let records: Vec<CaptionRecord> = self.records.par_iter().map(f).collect();
        Corpus::new(records, Some(self.labels.clone()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        util::write_jsonl(path, &self.records)
    }
}

/// Reads caption records without building a label space.
pub fn load_records(path: &Path) -> Result<Vec<CaptionRecord>> {
    let rows: Vec<(usize, CaptionRecord)> = util::read_jsonl(path)?;
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        r.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(r.caption_id.clone()) {
            return Err(Error::DuplicateId(r.caption_id));
        }
        records.push(r);
    }
    Ok(records)
}

/// Loads a caption JSONL corpus. See [`Corpus::new`] for label inference.
pub fn load_corpus(path: &Path, labels: Option<LabelSpace>) -> Result<Corpus> {
    let records = load_records(path)?;
    if records.is_empty() {
        return Err(Error::Empty(format!("{} contains no records", path.display())));
    }
    Corpus::new(records, labels)
}

/// Adds a class for natural (non-generated) items. Every record in
/// `originals` is relabeled to `original_label`.
pub fn make_four_way(corpus: &Corpus, originals: Vec<CaptionRecord>, original_label: &str) -> Result<Corpus> {
    if originals.is_empty() {
        return Err(Error::Empty("no original records supplied".into()));
    }
    let labels = corpus.labels.extended(original_label)?;
    let mut records = corpus.records.clone();
    records.extend(originals.into_iter().map(|mut r| {
        r.source_label = original_label.to_string();
        r
    }));
    Corpus::new(records, Some(labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Train,
    Test,
}

/// image_id → side, plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train_fraction: f64,
    pub assignments: BTreeMap<String, Side>,
}

impl SplitAssignment {
    pub fn side(&self, image_id: &str) -> Option<Side> {
        self.assignments.get(image_id).copied()
    }

    pub fn count(&self, side: Side) -> usize {
        self.assignments.values().filter(|&&s| s == side).count()
    }

    /// Splits the corpus records by the side of their image. Fails on records
    /// whose image is not covered by this assignment.
    pub fn partition<'a>(&self, corpus: &'a Corpus) -> Result<(Vec<&'a CaptionRecord>, Vec<&'a CaptionRecord>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in corpus.records() {
            match self.side(&r.image_id) {
                Some(Side::Train) => train.push(r),
                Some(Side::Test) => test.push(r),
                None => return Err(Error::UnknownId(r.image_id.clone())),
            }
        }
        Ok((train, test))
    }

    pub fn load(path: &Path) -> Result<Self> {
        util::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }
}

/// Assigns whole images to train or test.
///
/// Each image id is ranked by a hash of `(seed, image_id)`; the first
/// `round(fraction * n)` ids (clamped to `1..n-1`) go to train. The result
/// depends only on the set of ids, the seed and the fraction.
pub fn grouped_split(corpus: &Corpus, train_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    split_ids(corpus.image_ids(), train_fraction, seed)
}

pub fn split_ids<'a>(ids: impl IntoIterator<Item = &'a str>, train_fraction: f64, seed: u64) -> Result<SplitAssignment> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let ids: BTreeSet<&str> = ids.into_iter().collect();
    let n = ids.len();
    if n < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 distinct image ids to split, found {n}"
        )));
    }
    let mut ranked: Vec<(u64, &str)> = ids.into_iter().map(|id| (util::derive_seed(seed, id), id)).collect();
    ranked.sort_unstable();
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let assignments = ranked
        .into_iter()
        .enumerate()
        .map(|(i, (_, id))| (id.to_string(), if i < n_train { Side::Train } else { Side::Test }))
        .collect();
    Ok(SplitAssignment {
        seed,
        train_fraction,
        assignments,
    })
}
