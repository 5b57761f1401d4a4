//! Tokenization, n-grams and TF-IDF features.
//!
//! Term weights use the smoothed inverse document frequency
//! `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, and a document vector holds
//! `count(t) * idf(t)`, optionally scaled to unit L2 norm.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::util;

pub const MODEL_FORMAT_VERSION: u32 = 1;

static ENGLISH_STOPWORDS: LazyLock<(String, BTreeSet<String>)> = LazyLock::new(|| {
    let (version, terms) = util::parse_term_list(include_str!("../data/stopwords_en.txt"));
    (version.unwrap_or_default(), terms.into_iter().collect())
});

/// The shipped English stopword list.
pub fn english_stopwords() -> &'static BTreeSet<String> {
    &ENGLISH_STOPWORDS.1
}

pub fn english_stopwords_version() -> &'static str {
    &ENGLISH_STOPWORDS.0
}

/// Lowercases and splits on every character that is not a Unicode letter or
/// digit.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// All contiguous n-grams for `n` in `n_min..=n_max`, grouped by `n`, each
/// group in document order.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], n_min: usize, n_max: usize) -> Result<Vec<String>> {
    check_range(n_min, n_max)?;
    let mut out = Vec::new();
    for n in n_min..=n_max {
        if n > tokens.len() {
            break;
        }
        for window in tokens.windows(n) {
            let mut term = String::from(window[0].as_ref());
            for t in &window[1..] {
                term.push(' ');
                term.push_str(t.as_ref());
            }
            out.push(term);
        }
    }
    Ok(out)
}

fn check_range(n_min: usize, n_max: usize) -> Result<()> {
    if n_min < 1 {
        return Err(Error::Config("n-gram lower bound must be at least 1".into()));
    }
    if n_min > n_max {
        return Err(Error::Config(format!("empty n-gram range {n_min}..={n_max}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L2,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub min_df: u64,
    pub max_features: Option<usize>,
    /// Tokens dropped before n-grams are formed.
    pub stopwords: BTreeSet<String>,
    pub norm: Norm,
}

impl TfIdfConfig {
    /// Unigrams + bigrams, no stopword removal: classifier features.
    pub fn classifier() -> Self {
        Self {
            n_min: 1,
            n_max: 2,
            min_df: 1,
            max_features: Some(200_000),
            stopwords: BTreeSet::new(),
            norm: Norm::L2,
        }
    }

    /// Bigrams + trigrams over stopword-free token streams: phrase ranking.
    pub fn phrases() -> Self {
        Self {
            n_min: 2,
            n_max: 3,
            stopwords: english_stopwords().clone(),
            ..Self::classifier()
        }
    }

    pub fn with_ngrams(mut self, n_min: usize, n_max: usize) -> Self {
        self.n_min = n_min;
        self.n_max = n_max;
        self
    }

    /// Terms of one document under this configuration.
    pub fn terms(&self, text: &str) -> Vec<String> {
        let tokens: Vec<String> = tokenize(text)
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect();
        ngrams(&tokens, self.n_min, self.n_max).expect("range validated on fit")
    }
}

impl Default for TfIdfConfig {
    fn default() -> Self {
        Self::classifier()
    }
}

/// Sorted term list with a lookup index. Index = position.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_sorted(terms: Vec<String>) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { terms, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| i as usize)
    }

    pub fn term(&self, index: usize) -> &str {
        &self.terms[index]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(terms: Vec<String>) -> Self {
        Self::from_sorted(terms)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.terms
    }
}

/// Sparse vector with strictly increasing indices and no explicit zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.sort_unstable_by_key(|&(i, _)| i);
        let mut indices = Vec::with_capacity(pairs.len());
        let mut values = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i as usize >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: i as usize + 1,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry {i}")));
            }
            if indices.last() == Some(&i) {
                return Err(Error::Invalid(format!("repeated sparse index {i}")));
            }
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        }
        Ok(Self { dim, indices, values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn get(&self, index: usize) -> f64 {
        match self.indices.binary_search(&(index as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            dense[i] = v;
        }
        dense
    }
}

/// Fitted TF-IDF weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    pub format_version: u32,
    pub config: TfIdfConfig,
    pub n_docs: u64,
    vocabulary: Vocabulary,
    df: Vec<u64>,
    idf: Vec<f64>,
}

#[derive(Default, Clone, Copy)]
struct TermStats {
    df: u64,
    tf: u64,
}

fn merge_stats(mut a: HashMap<String, TermStats>, b: HashMap<String, TermStats>) -> HashMap<String, TermStats> {
    if a.len() < b.len() {
        return merge_stats(b, a);
    }
    for (term, s) in b {
        let e = a.entry(term).or_default();
        e.df += s.df;
        e.tf += s.tf;
    }
    a
}

pub fn idf_value(n_docs: u64, df: u64) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

impl TfIdfModel {
    /// Fits vocabulary and idf weights on `docs`.
    ///
    /// Vocabulary filters apply in order: stopwords (token level), `min_df`,
    /// then `max_features`, which keeps the terms with the highest corpus
    /// count, breaking ties by higher df and then lexicographically.
    pub fn fit<S: AsRef<str> + Sync>(docs: &[S], config: TfIdfConfig) -> Result<Self> {
        check_range(config.n_min, config.n_max)?;
        if docs.is_empty() {
            return Err(Error::Empty("cannot fit TF-IDF on zero documents".into()));
        }
        let stats = docs
            .par_iter()
            .fold(HashMap::new, |mut acc: HashMap<String, TermStats>, doc| {
                let mut counts: HashMap<String, u64> = HashMap::new();
                for t in config.terms(doc.as_ref()) {
                    *counts.entry(t).or_insert(0) += 1;
                }
                for (t, c) in counts {
                    let e = acc.entry(t).or_default();
                    e.df += 1;
                    e.tf += c;
                }
                acc
            })
            .reduce(HashMap::new, merge_stats);

        let mut kept: Vec<(String, TermStats)> = stats.into_iter().filter(|(_, s)| s.df >= config.min_df).collect();
        if let Some(max) = config.max_features {
            if kept.len() > max {
                kept.sort_unstable_by(|(ta, a), (tb, b)| b.tf.cmp(&a.tf).then(b.df.cmp(&a.df)).then(ta.cmp(tb)));
                kept.truncate(max);
            }
        }
        kept.sort_unstable_by(|(a, _), (b, _)| a.cmp(b));

        let n_docs = docs.len() as u64;
        let df: Vec<u64> = kept.iter().map(|(_, s)| s.df).collect();
        let idf = df.iter().map(|&d| idf_value(n_docs, d)).collect();
        let vocabulary = Vocabulary::from_sorted(kept.into_iter().map(|(t, _)| t).collect());
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            config,
            n_docs,
            vocabulary,
            df,
            idf,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn df(&self) -> &[u64] {
        &self.df
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|i| self.idf[i])
    }

    /// In-vocabulary term counts of `text`.
    pub fn counts(&self, text: &str) -> SparseVector {
        let mut counts: HashMap<u32, f64> = HashMap::new();
        for t in self.config.terms(text) {
            if let Some(i) = self.vocabulary.get(&t) {
                *counts.entry(i as u32).or_insert(0.0) += 1.0;
            }
        }
        SparseVector::new(self.dim(), counts.into_iter().collect()).expect("indices come from the vocabulary")
    }

    /// `count * idf` before normalization.
    pub fn weigh(&self, counts: &SparseVector) -> SparseVector {
        let pairs = counts.iter().map(|(i, c)| (i as u32, c * self.idf[i])).collect();
        SparseVector::new(self.dim(), pairs).expect("finite by construction")
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let mut v = self.weigh(&self.counts(text));
        if self.config.norm == Norm::L2 {
            let norm = v.l2_norm();
            if norm > 0.0 {
                v.values.iter_mut().for_each(|x| *x /= norm);
            }
        }
        v
    }

    pub fn transform_all<S: AsRef<str> + Sync>(&self, docs: &[S]) -> Vec<SparseVector> {
        docs.par_iter().map(|d| self.transform(d.as_ref())).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = util::read_json(path)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported TF-IDF model version {}",
                model.format_version
            )));
        }
        if model.idf.len() != model.vocabulary.len() || model.df.len() != model.vocabulary.len() {
            return Err(Error::Invalid("TF-IDF model vectors disagree with vocabulary size".into()));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseScoring {
    /// Mean TF-IDF value over the class's documents.
    #[default]
    ClassMean,
    /// Class mean divided by the mean over all other documents (+1e-3).
    ClassVsRest,
}

const VS_REST_SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPhrase {
    pub term: String,
    pub score: f64,
}

/// Normalizes exclusion phrases the same way document terms are built.
pub fn exclusion_set<S: AsRef<str>>(phrases: impl IntoIterator<Item = S>) -> HashSet<String> {
    phrases
        .into_iter()
        .map(|p| tokenize(p.as_ref()).join(" "))
        .filter(|p| !p.is_empty())
        .collect()
}

/// Order-independent sum: sort the addends first.
fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

/// Ranks terms per class by TF-IDF score. Only terms that occur in the class
/// are listed; ties go to the lexicographically smaller term.
pub fn top_phrases_per_class(
    corpus: &Corpus,
    model: &TfIdfModel,
    k: usize,
    exclusion: &HashSet<String>,
    scoring: PhraseScoring,
) -> Result<Vec<(String, Vec<RankedPhrase>)>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let texts: Vec<&str> = corpus.records().iter().map(|r| r.text.as_str()).collect();
    let vectors = model.transform_all(&texts);
    let targets = corpus.targets();
    let n_classes = corpus.labels().len();

    // per class, per term: every nonzero value contributed by a document
    let mut contributions: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); n_classes];
    let mut class_docs = vec![0usize; n_classes];
    for (v, &y) in vectors.iter().zip(&targets) {
        class_docs[y] += 1;
        for (i, x) in v.iter() {
            contributions[y].entry(i).or_default().push(x);
        }
    }
    let sums: Vec<BTreeMap<usize, f64>> = contributions
        .into_iter()
        .map(|m| m.into_iter().map(|(i, mut xs)| (i, stable_sum(&mut xs))).collect())
        .collect();

    let total_docs: usize = class_docs.iter().sum();
    let mut out = Vec::with_capacity(n_classes);
    for (y, label) in corpus.labels().labels().iter().enumerate() {
        let mut ranked: Vec<RankedPhrase> = Vec::new();
        if class_docs[y] > 0 {
            for (&i, &sum) in &sums[y] {
                let term = model.vocabulary.term(i);
                if exclusion.contains(term) {
                    continue;
                }
                let mean = sum / class_docs[y] as f64;
                let score = match scoring {
                    PhraseScoring::ClassMean => mean,
                    PhraseScoring::ClassVsRest => {
                        let rest_docs = total_docs - class_docs[y];
                        let mut rest: Vec<f64> = (0..n_classes)
                            .filter(|&c| c != y)
                            .filter_map(|c| sums[c].get(&i).copied())
                            .collect();
                        let rest_mean = if rest_docs == 0 {
                            0.0
                        } else {
                            stable_sum(&mut rest) / rest_docs as f64
                        };
                        mean / (rest_mean + VS_REST_SMOOTHING)
                    }
                };
                ranked.push(RankedPhrase {
                    term: term.to_string(),
                    score,
                });
            }
        }
        ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
        ranked.truncate(k);
        out.push((label.clone(), ranked));
    }
    Ok(out)
}

/// Ranked phrases for one class.
pub fn top_phrases_for_label(
    corpus: &Corpus,
    model: &TfIdfModel,
    label: &str,
    k: usize,
    exclusion: &HashSet<String>,
    scoring: PhraseScoring,
) -> Result<Vec<RankedPhrase>> {
    let y = corpus.labels().require(label)?;
    let mut all = top_phrases_per_class(corpus, model, k, exclusion, scoring)?;
    Ok(all.swap_remove(y).1)
}

/// Table-shaped rows: `rank, phrase for class 0, phrase for class 1, ...`.
pub fn phrase_table(ranked: &[(String, Vec<RankedPhrase>)]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["rank".to_string()];
    header.extend(ranked.iter().map(|(l, _)| l.clone()));
    let depth = ranked.iter().map(|(_, r)| r.len()).max().unwrap_or(0);
    let rows = (0..depth)
        .map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(ranked.iter().map(|(_, r)| r.get(i).map(|p| p.term.clone()).unwrap_or_default()));
            row
        })
        .collect();
    (header, rows)
}

/// Unigram counts for one class after tokenization and stopword removal.
pub fn word_frequencies(corpus: &Corpus, label: &str, stopwords: &BTreeSet<String>) -> Result<BTreeMap<String, u64>> {
    corpus.labels().require(label)?;
    let mut freq = BTreeMap::new();
    for r in corpus.records().iter().filter(|r| r.source_label == label) {
        for t in tokenize(&r.text) {
            if !stopwords.contains(&t) {
                *freq.entry(t).or_insert(0) += 1;
            }
        }
    }
    Ok(freq)
}

/// Frequency rows sorted by count (descending), then term.
pub fn frequency_rows(freq: &BTreeMap<String, u64>) -> Vec<(String, u64)> {
    let mut rows: Vec<(String, u64)> = freq.iter().map(|(t, &c)| (t.clone(), c)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CaptionRecord, PromptTier, Variant};
    use proptest::prelude::*;

    fn unigram(norm: Norm) -> TfIdfConfig {
        TfIdfConfig {
            norm,
            ..TfIdfConfig::classifier().with_ngrams(1, 1)
        }
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("The image shows a dog."), ["the", "image", "shows", "a", "dog"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("low-angle view"), ["low", "angle", "view"]);
        assert_eq!(tokenize("ÉTÉ  café"), ["été", "café"]);
    }

    #[test]
    fn ngram_examples() {
        let t = ["a", "b", "c"];
        assert_eq!(ngrams(&t, 2, 2).unwrap(), ["a b", "b c"]);
        assert_eq!(ngrams(&t, 2, 3).unwrap(), ["a b", "b c", "a b c"]);
        assert!(ngrams(&["a"], 2, 3).unwrap().is_empty());
        assert!(ngrams(&t, 0, 2).is_err());
        assert!(ngrams(&t, 3, 2).is_err());
    }

    #[test]
    fn idf_hand_values() {
        let m = TfIdfModel::fit(&["red red blue", "blue green"], unigram(Norm::L2)).unwrap();
        assert_eq!(m.vocabulary().terms(), ["blue", "green", "red"]);
        assert!((m.idf_of("blue").unwrap() - 1.0).abs() < 1e-15);
        // ln(3/2) + 1
        assert!((m.idf_of("red").unwrap() - 1.405_465_108_108_164_4).abs() < 1e-12);
        let v = m.transform("red red blue");
        assert!((v.get(2) - 0.942_134_004_024_688).abs() < 1e-4, "{}", v.get(2));
        assert!((v.get(0) - 0.335_175_438_573_694).abs() < 1e-4, "{}", v.get(0));
        assert!((v.l2_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_df_filter_and_oov() {
        let cfg = TfIdfConfig {
            min_df: 2,
            ..unigram(Norm::L2)
        };
        let m = TfIdfModel::fit(&["red red blue", "blue green"], cfg).unwrap();
        assert_eq!(m.vocabulary().terms(), ["blue"]);
        assert_eq!(m.transform("purple orange").nnz(), 0);
        assert!(TfIdfModel::fit::<&str>(&[], unigram(Norm::L2)).is_err());
    }

    #[test]
    fn max_features_tie_break() {
        let cfg = TfIdfConfig {
            max_features: Some(2),
            ..unigram(Norm::None)
        };
        // counts: a=3 (df 2), b=2 (df 2), c=2 (df 1), d=1
        let m = TfIdfModel::fit(&["a a b c c", "a b d"], cfg).unwrap();
        assert_eq!(m.vocabulary().terms(), ["a", "b"]);
    }

    #[test]
    fn stopwords_removed_before_ngrams() {
        let m = TfIdfModel::fit(&["shallow depth of field"], TfIdfConfig::phrases()).unwrap();
        assert_eq!(m.vocabulary().terms(), ["depth field", "shallow depth", "shallow depth field"]);
    }

    #[test]
    fn serialized_model_round_trips() {
        let m = TfIdfModel::fit(&["red red blue", "blue green"], TfIdfConfig::classifier()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = TfIdfModel::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.transform("blue green"), m.transform("blue green"));
    }

    fn rec(id: usize, label: &str, text: &str) -> CaptionRecord {
        CaptionRecord {
            caption_id: format!("c{id}"),
            image_id: format!("i{id}"),
            prompt_tier: PromptTier::Detailed,
            source_label: label.into(),
            text: text.into(),
            variant: Variant::Raw,
            provenance: None,
        }
    }

    fn toy_corpus() -> Corpus {
        let a = [
            "the lighting suggests a calm evening",
            "soft lighting suggests warmth on the street",
            "lighting suggests rain near the street",
        ];
        let b = [
            "a dog on the street at night",
            "a calm dog near a red car",
            "the street is wet with rain",
        ];
        let mut recs = Vec::new();
        for (i, t) in a.iter().enumerate() {
            recs.push(rec(i, "A", t));
        }
        for (i, t) in b.iter().enumerate() {
            recs.push(rec(10 + i, "B", t));
        }
        Corpus::new(recs, None).unwrap()
    }

    #[test]
    fn distinctive_phrase_ranks_first() {
        let c = toy_corpus();
        let texts: Vec<&str> = c.records().iter().map(|r| r.text.as_str()).collect();
        let m = TfIdfModel::fit(&texts, TfIdfConfig::phrases()).unwrap();
        let ranked = top_phrases_per_class(&c, &m, 5, &HashSet::new(), PhraseScoring::ClassMean).unwrap();
        assert_eq!(ranked[0].0, "A");
        assert_eq!(ranked[0].1[0].term, "lighting suggests");

        // brute-force mean over class A
        let expected: f64 = c
            .records()
            .iter()
            .filter(|r| r.source_label == "A")
            .map(|r| m.transform(&r.text).get(m.vocabulary().get("lighting suggests").unwrap()))
            .sum::<f64>()
            / 3.0;
        assert!((ranked[0].1[0].score - expected).abs() < 1e-12);
        assert!(ranked[1].1.iter().all(|p| p.term != "lighting suggests"));

        let vs_rest = top_phrases_for_label(&c, &m, "A", 1, &HashSet::new(), PhraseScoring::ClassVsRest).unwrap();
        assert_eq!(vs_rest[0].term, "lighting suggests");

        let excl = exclusion_set(["Lighting-suggests"]);
        let without = top_phrases_for_label(&c, &m, "A", 100, &excl, PhraseScoring::ClassMean).unwrap();
        assert!(without.iter().all(|p| p.term != "lighting suggests"));
        assert!(without.len() <= m.dim());
        assert!(top_phrases_for_label(&c, &m, "Z", 3, &excl, PhraseScoring::ClassMean).is_err());
    }

    #[test]
    fn word_frequency_examples() {
        let c = Corpus::new(vec![rec(1, "A", "blue blue sky"), rec(2, "B", "the sea")], None).unwrap();
        let f = word_frequencies(&c, "A", english_stopwords()).unwrap();
        assert_eq!(f, BTreeMap::from([("blue".to_string(), 2), ("sky".to_string(), 1)]));
        let f = word_frequencies(&c, "B", english_stopwords()).unwrap();
        assert_eq!(f.values().sum::<u64>(), 1);
        assert!(word_frequencies(&c, "nope", english_stopwords()).is_err());
        assert_eq!(frequency_rows(&word_frequencies(&c, "A", &BTreeSet::new()).unwrap())[0], ("blue".into(), 2));
    }

    proptest! {
        #[test]
        fn l2_transform_has_unit_norm(doc in "[a-e ]{1,40}") {
            let m = TfIdfModel::fit(&["a b c", "c d e a", "b b e"], TfIdfConfig::classifier()).unwrap();
            let v = m.transform(&doc);
            if v.nnz() > 0 {
                prop_assert!((v.l2_norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn raw_weights_add_under_concatenation(a in "[a-e ]{0,30}", b in "[a-e ]{0,30}") {
            let m = TfIdfModel::fit(&["a b c", "c d e a", "b b e"], unigram(Norm::None)).unwrap();
            let joined = m.transform(&format!("{a} {b}"));
            let (va, vb) = (m.transform(&a), m.transform(&b));
            for i in 0..m.dim() {
                prop_assert!((joined.get(i) - va.get(i) - vb.get(i)).abs() < 1e-12);
            }
        }

        #[test]
        fn fitted_values_bounded(docs in proptest::collection::vec("[a-f ]{1,25}", 1..8)) {
            let m = TfIdfModel::fit(&docs, unigram(Norm::None)).unwrap();
            let max_idf = m.idf().iter().cloned().fold(0.0, f64::max);
            for d in &docs {
                let counts = m.counts(d);
                let max_count = counts.values().iter().cloned().fold(0.0, f64::max);
                for (_, v) in m.transform(d).iter() {
                    prop_assert!(v <= max_count * max_idf + 1e-12);
                }
            }
        }
    }
}
