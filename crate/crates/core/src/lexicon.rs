//! Dictionary-based color, texture and composition analysis, plus ingestion
//! of externally produced judgments (detail ranks, texture, composition).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelSpace, PromptTier};
use crate::error::{Error, Result};
use crate::features::tokenize;
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Basic,
    Nuanced,
}

/// A term matched in a caption: token span `[start, end)` and its tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub term: String,
    pub tier: Tier,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierCounts {
    pub basic: u64,
    pub nuanced: u64,
}

/// Two-tier phrase dictionary matched longest-first over token windows.
#[derive(Debug, Clone)]
pub struct TieredLexicon {
    version: String,
    entries: HashMap<Vec<String>, Tier>,
    max_len: usize,
}

fn phrase_tokens(term: &str) -> Result<Vec<String>> {
    if term != term.to_lowercase() {
        return Err(Error::Config(format!("dictionary entry `{term}` is not lowercase")));
    }
    let tokens = tokenize(term);
    if tokens.is_empty() {
        return Err(Error::Config(format!("dictionary entry `{term}` has no tokens")));
    }
    Ok(tokens)
}

impl TieredLexicon {
    /// Builds a lexicon. Every `modifier + basic` pair becomes a nuanced
    /// compound. Basic and nuanced entries must not overlap.
    pub fn new<S: AsRef<str>>(version: &str, basic: &[S], nuanced: &[S], modifiers: &[S]) -> Result<Self> {
        let mut entries = HashMap::new();
        for b in basic {
            entries.insert(phrase_tokens(b.as_ref())?, Tier::Basic);
        }
        let mut nuanced_entries = Vec::new();
        for n in nuanced {
            nuanced_entries.push((n.as_ref().to_string(), phrase_tokens(n.as_ref())?));
        }
        for m in modifiers {
            let m_tokens = phrase_tokens(m.as_ref())?;
            for b in basic {
                let mut t = m_tokens.clone();
                t.extend(phrase_tokens(b.as_ref())?);
                nuanced_entries.push((format!("{} {}", m.as_ref(), b.as_ref()), t));
            }
        }
        for (term, tokens) in nuanced_entries {
            if entries.get(&tokens) == Some(&Tier::Basic) {
                return Err(Error::Config(format!("`{term}` is both basic and nuanced")));
            }
            entries.insert(tokens, Tier::Nuanced);
        }
        let max_len = entries.keys().map(Vec::len).max().unwrap_or(1);
        Ok(Self {
            version: version.to_string(),
            entries,
            max_len,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest match first; matched tokens are consumed. Phrases do not span
    /// line breaks. Spans index the token stream of the whole text.
    pub fn find(&self, text: &str) -> Vec<Match> {
        let mut out = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let tokens = tokenize(line);
            let mut i = 0;
            'scan: while i < tokens.len() {
                for len in (1..=self.max_len.min(tokens.len() - i)).rev() {
                    if let Some(&tier) = self.entries.get(&tokens[i..i + len]) {
                        out.push(Match {
                            start: offset + i,
                            end: offset + i + len,
                            term: tokens[i..i + len].join(" "),
                            tier,
                        });
                        i += len;
                        continue 'scan;
                    }
                }
                i += 1;
            }
            offset += tokens.len();
        }
        out
    }

    pub fn count(&self, text: &str) -> TierCounts {
        let mut c = TierCounts::default();
        for m in self.find(text) {
            match m.tier {
                Tier::Basic => c.basic += 1,
                Tier::Nuanced => c.nuanced += 1,
            }
        }
        c
    }
}

macro_rules! data_file {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/lexicon/", $name))
    };
}

fn shipped(basic: &str, nuanced: &str, modifiers: Option<&str>) -> TieredLexicon {
    let (bv, b) = util::parse_term_list(basic);
    let (nv, n) = util::parse_term_list(nuanced);
    let (mv, m) = modifiers.map(util::parse_term_list).unwrap_or_default();
    let version = [bv, nv, mv].into_iter().flatten().collect::<Vec<_>>().join("+");
    TieredLexicon::new(&version, &b, &n, &m).expect("shipped dictionaries are valid")
}

static COLORS: LazyLock<TieredLexicon> = LazyLock::new(|| {
    shipped(
        data_file!("colors_basic.txt"),
        data_file!("colors_nuanced.txt"),
        Some(data_file!("color_modifiers.txt")),
    )
});

static TEXTURES: LazyLock<TieredLexicon> =
    LazyLock::new(|| shipped(data_file!("textures_basic.txt"), data_file!("textures_nuanced.txt"), None));

pub fn colors() -> &'static TieredLexicon {
    &COLORS
}

pub fn textures() -> &'static TieredLexicon {
    &TEXTURES
}

pub fn count_colors(text: &str) -> TierCounts {
    COLORS.count(text)
}

pub fn count_textures(text: &str) -> TierCounts {
    TEXTURES.count(text)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionFlags {
    pub spatial_layers: bool,
    pub subject_focus: bool,
    pub guiding_elements: bool,
    pub balance_symmetry: bool,
}

impl CompositionFlags {
    pub const NAMES: [&'static str; 4] = ["spatial_layers", "subject_focus", "guiding_elements", "balance_symmetry"];

    pub fn as_array(&self) -> [bool; 4] {
        [self.spatial_layers, self.subject_focus, self.guiding_elements, self.balance_symmetry]
    }
}

/// Keyword lists for the four composition criteria.
#[derive(Debug, Clone)]
pub struct CompositionLexicon {
    version: String,
    criteria: [TieredLexicon; 4],
}

impl CompositionLexicon {
    pub fn new<S: AsRef<str>>(version: &str, lists: [&[S]; 4]) -> Result<Self> {
        let none: &[&str] = &[];
        let build = |list: &[S]| -> Result<TieredLexicon> {
            let terms: Vec<&str> = list.iter().map(AsRef::as_ref).collect();
            TieredLexicon::new(version, &terms, none, none)
        };
        Ok(Self {
            version: version.to_string(),
            criteria: [build(lists[0])?, build(lists[1])?, build(lists[2])?, build(lists[3])?],
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn flags(&self, text: &str) -> CompositionFlags {
        let hit = |i: usize| !self.criteria[i].find(text).is_empty();
        CompositionFlags {
            spatial_layers: hit(0),
            subject_focus: hit(1),
            guiding_elements: hit(2),
            balance_symmetry: hit(3),
        }
    }
}

static COMPOSITION: LazyLock<CompositionLexicon> = LazyLock::new(|| {
    let files = [
        data_file!("composition_spatial.txt"),
        data_file!("composition_subject.txt"),
        data_file!("composition_guiding.txt"),
        data_file!("composition_balance.txt"),
    ];
    let parsed = files.map(util::parse_term_list);
    let version = parsed.iter().filter_map(|(v, _)| v.clone()).collect::<Vec<_>>().join("+");
    let lists = [&parsed[0].1[..], &parsed[1].1[..], &parsed[2].1[..], &parsed[3].1[..]];
    CompositionLexicon::new(&version, lists).expect("shipped keyword lists are valid")
});

pub fn composition() -> &'static CompositionLexicon {
    &COMPOSITION
}

pub fn composition_flags(text: &str) -> CompositionFlags {
    COMPOSITION.flags(text)
}

/// Color or texture statistics for one label. Totals are integers; the derived
/// columns are computed from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconStats {
    pub label: String,
    pub n_captions: u64,
    pub total_basic: u64,
    pub total_nuanced: u64,
    pub with_basic: u64,
    pub with_nuanced: u64,
    pub pct_with_basic: f64,
    pub pct_with_nuanced: f64,
    pub avg_basic_per_caption: f64,
    pub avg_nuanced_per_caption: f64,
}

impl LexiconStats {
    pub fn from_counts(label: &str, counts: &[TierCounts]) -> Self {
        let n = counts.len() as u64;
        let total_basic = counts.iter().map(|c| c.basic).sum();
        let total_nuanced = counts.iter().map(|c| c.nuanced).sum();
        let with_basic = counts.iter().filter(|c| c.basic > 0).count() as u64;
        let with_nuanced = counts.iter().filter(|c| c.nuanced > 0).count() as u64;
        let ratio = |a: u64| if n == 0 { 0.0 } else { a as f64 / n as f64 };
        Self {
            label: label.to_string(),
            n_captions: n,
            total_basic,
            total_nuanced,
            with_basic,
            with_nuanced,
            pct_with_basic: 100.0 * ratio(with_basic),
            pct_with_nuanced: 100.0 * ratio(with_nuanced),
            avg_basic_per_caption: ratio(total_basic),
            avg_nuanced_per_caption: ratio(total_nuanced),
        }
    }
}

/// Composition percentages for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionStats {
    pub label: String,
    pub n_captions: u64,
    /// Caption counts per criterion, in [`CompositionFlags::NAMES`] order.
    pub counts: [u64; 4],
    pub percentages: [f64; 4],
}

impl CompositionStats {
    pub fn from_flags(label: &str, flags: &[CompositionFlags]) -> Self {
        let mut counts = [0u64; 4];
        for f in flags {
            for (c, hit) in counts.iter_mut().zip(f.as_array()) {
                *c += u64::from(hit);
            }
        }
        let n = flags.len() as u64;
        let percentages = counts.map(|c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 });
        Self {
            label: label.to_string(),
            n_captions: n,
            counts,
            percentages,
        }
    }
}

/// Which analyses [`corpus_stats`] runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Analyzers {
    pub colors: bool,
    pub textures: bool,
    pub composition: bool,
}

impl Analyzers {
    pub fn all() -> Self {
        Self {
            colors: true,
            textures: true,
            composition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLexiconReport {
    /// Producer of each section, e.g. a dictionary version or `judge:<tag>`.
    pub sources: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub colors: Option<Vec<LexiconStats>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub textures: Option<Vec<LexiconStats>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composition: Option<Vec<CompositionStats>>,
}

/// Per-label aggregates, in label-space order. Per-caption analysis runs in
/// parallel; aggregation is integer-valued and so order-invariant.
pub fn corpus_stats(corpus: &Corpus, analyzers: Analyzers) -> CorpusLexiconReport {
    let labels = corpus.labels();
    let targets = corpus.targets();
    let per_label = |f: &(dyn Fn(&str) -> TierCounts + Sync)| -> Vec<LexiconStats> {
        let counts: Vec<TierCounts> = corpus.records().par_iter().map(|r| f(&r.text)).collect();
        (0..labels.len())
            .map(|k| {
                let mine: Vec<TierCounts> = counts.iter().zip(&targets).filter(|(_, &t)| t == k).map(|(c, _)| *c).collect();
                LexiconStats::from_counts(labels.label(k), &mine)
            })
            .collect()
    };
    let mut sources = BTreeMap::new();
    let colors = analyzers.colors.then(|| {
        sources.insert("colors".into(), format!("dictionary:{}", COLORS.version()));
        per_label(&count_colors)
    });
    let textures = analyzers.textures.then(|| {
        sources.insert("textures".into(), format!("dictionary:{}", TEXTURES.version()));
        per_label(&count_textures)
    });
    let composition = analyzers.composition.then(|| {
        sources.insert("composition".into(), format!("keywords:{}", COMPOSITION.version()));
        let flags: Vec<CompositionFlags> = corpus.records().par_iter().map(|r| composition_flags(&r.text)).collect();
        (0..labels.len())
            .map(|k| {
                let mine: Vec<CompositionFlags> = flags.iter().zip(&targets).filter(|(_, &t)| t == k).map(|(f, _)| *f).collect();
                CompositionStats::from_flags(labels.label(k), &mine)
            })
            .collect()
    });
    CorpusLexiconReport {
        sources,
        colors,
        textures,
        composition,
    }
}

/// Lexicon statistics as table rows. The extreme value of each numeric column is suffixed
/// with ` (max)` or ` (min)`.
pub fn lexicon_table(stats: &[LexiconStats]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["label", "total_basic", "pct_with_basic", "avg_basic", "total_nuanced", "pct_with_nuanced", "avg_nuanced"]
        .map(String::from)
        .to_vec();
    let cols: Vec<Vec<f64>> = stats
        .iter()
        .map(|s| {
            vec![
                s.total_basic as f64,
                s.pct_with_basic,
                s.avg_basic_per_caption,
                s.total_nuanced as f64,
                s.pct_with_nuanced,
                s.avg_nuanced_per_caption,
            ]
        })
        .collect();
    let rows = stats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![s.label.clone()];
            for (j, v) in cols[i].iter().enumerate() {
                let text = if j == 0 || j == 3 { format!("{}", *v as u64) } else { format!("{v:.2}") };
                row.push(text + &extreme_marker(&cols, i, j));
            }
            row
        })
        .collect();
    (header, rows)
}

/// Composition rows with the same extreme markers.
pub fn composition_table(stats: &[CompositionStats]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["label".to_string()];
    header.extend(CompositionFlags::NAMES.map(|n| format!("{n}_pct")));
    let cols: Vec<Vec<f64>> = stats.iter().map(|s| s.percentages.to_vec()).collect();
    let rows = stats
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut row = vec![s.label.clone()];
            row.extend((0..4).map(|j| format!("{:.2}{}", cols[i][j], extreme_marker(&cols, i, j))));
            row
        })
        .collect();
    (header, rows)
}

fn extreme_marker(cols: &[Vec<f64>], row: usize, col: usize) -> String {
    if cols.len() < 2 {
        return String::new();
    }
    let values: Vec<f64> = cols.iter().map(|c| c[col]).collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == min {
        String::new()
    } else if values[row] == max {
        " (max)".into()
    } else if values[row] == min {
        " (min)".into()
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgmentKind {
    DetailRank,
    Texture,
    Composition,
}

/// One externally produced judgment. `value` is a rank (integer) for
/// `detail_rank`, `{"basic": n, "nuanced": n}` for `texture`, and an object of
/// the four composition booleans for `composition`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub item_id: String,
    pub kind: JudgmentKind,
    pub value: serde_json::Value,
    pub judge_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum JudgmentValue {
    Rank(u32),
    Texture(TierCounts),
    Composition(CompositionFlags),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Judgment {
    pub item_id: String,
    /// Whether the judged item is a generated image (`#img`) rather than a caption.
    pub is_image: bool,
    pub label: usize,
    pub image_id: String,
    pub prompt_tier: PromptTier,
    pub value: JudgmentValue,
    pub judge_tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Judgments {
    pub labels: LabelSpace,
    pub items: Vec<Judgment>,
}

fn parse_value(kind: JudgmentKind, value: &serde_json::Value, k: usize) -> std::result::Result<JudgmentValue, String> {
    match kind {
        JudgmentKind::DetailRank => {
            let rank = value.as_u64().ok_or_else(|| format!("rank must be an integer, got {value}"))?;
            if rank < 1 || rank > k as u64 {
                return Err(format!("rank {rank} outside 1..={k}"));
            }
            Ok(JudgmentValue::Rank(rank as u32))
        }
        JudgmentKind::Texture => serde_json::from_value(value.clone())
            .map(JudgmentValue::Texture)
            .map_err(|e| format!("texture value: {e}")),
        JudgmentKind::Composition => serde_json::from_value(value.clone())
            .map(JudgmentValue::Composition)
            .map_err(|e| format!("composition value: {e}")),
    }
}

/// Validates judgment records against a corpus. Item ids are caption ids or
/// `<caption_id>#img`. Detail ranks must form a permutation of `1..=K` within
/// each sibling group (same image, prompt tier and item kind).
pub fn validate_judgments(records: &[(usize, JudgmentRecord)], corpus: &Corpus, path: &Path) -> Result<Judgments> {
    let at = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let ids = corpus.id_index();
    let k = corpus.labels().len();
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(records.len());
    let mut lines = Vec::with_capacity(records.len());
    for (line, r) in records {
        let (stem, is_image) = match r.item_id.split_once('#') {
            Some((stem, "img")) => (stem, true),
            Some(_) => return Err(at(*line, format!("unknown id `{}`", r.item_id))),
            None => (r.item_id.as_str(), false),
        };
        let Some(&ci) = ids.get(stem) else {
            return Err(at(*line, format!("unknown id `{}`", r.item_id)));
        };
        if !seen.insert((r.item_id.clone(), r.kind)) {
            return Err(at(*line, format!("duplicate judgment for ({}, {:?})", r.item_id, r.kind)));
        }
        let value = parse_value(r.kind, &r.value, k).map_err(|m| at(*line, m))?;
        let caption = &corpus.records()[ci];
        items.push(Judgment {
            item_id: r.item_id.clone(),
            is_image,
            label: corpus.labels().require(&caption.source_label)?,
            image_id: caption.image_id.clone(),
            prompt_tier: caption.prompt_tier,
            value,
            judge_tag: r.judge_tag.clone(),
        });
        lines.push(*line);
    }
    let mut groups: BTreeMap<(&str, PromptTier, bool), Vec<(u32, usize)>> = BTreeMap::new();
    for (j, &line) in items.iter().zip(&lines) {
        if let JudgmentValue::Rank(r) = j.value {
            groups.entry((&j.image_id, j.prompt_tier, j.is_image)).or_default().push((r, line));
        }
    }
    for ((image_id, tier, is_image), ranks) in &groups {
        let mut sorted: Vec<u32> = ranks.iter().map(|(r, _)| *r).collect();
        sorted.sort_unstable();
        if sorted != (1..=k as u32).collect::<Vec<_>>() {
            let line = ranks.iter().map(|(_, l)| *l).max().unwrap_or(0);
            let what = if *is_image { "image" } else { "caption" };
            return Err(at(
                line,
                format!("{what} ranks for ({image_id}, {}) are {sorted:?}, expected a permutation of 1..={k}", tier.as_str()),
            ));
        }
    }
    Ok(Judgments {
        labels: corpus.labels().clone(),
        items,
    })
}

pub fn ingest_judgments(path: &Path, corpus: &Corpus) -> Result<Judgments> {
    let records: Vec<(usize, JudgmentRecord)> = util::read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::Empty(format!("{} has no judgments", path.display())));
    }
    validate_judgments(&records, corpus, path)
}

/// Rank distribution: per label, the percentage of its items that
/// received each rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankDistribution {
    pub subject: String,
    pub labels: LabelSpace,
    /// `counts[label][rank - 1]`.
    pub counts: Vec<Vec<u64>>,
    pub percentages: Vec<Vec<f64>>,
}

impl RankDistribution {
    pub fn from_counts(subject: &str, labels: LabelSpace, counts: Vec<Vec<u64>>) -> Self {
        let percentages = counts
            .iter()
            .map(|row| {
                let n: u64 = row.iter().sum();
                row.iter().map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 }).collect()
            })
            .collect();
        Self {
            subject: subject.to_string(),
            labels,
            counts,
            percentages,
        }
    }
}

impl Judgments {
    fn of_kind(&self, is_image: bool) -> impl Iterator<Item = &Judgment> {
        self.items.iter().filter(move |j| j.is_image == is_image)
    }

    pub fn judge_tags(&self) -> Vec<String> {
        self.items.iter().map(|j| j.judge_tag.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect()
    }

    /// Rank distributions for captions and for generated images (when present).
    pub fn rank_distributions(&self) -> Vec<RankDistribution> {
        let k = self.labels.len();
        [(false, "captions"), (true, "images")]
            .into_iter()
            .filter_map(|(is_image, subject)| {
                let mut counts = vec![vec![0u64; k]; k];
                let mut any = false;
                for j in self.of_kind(is_image) {
                    if let JudgmentValue::Rank(r) = j.value {
                        counts[j.label][r as usize - 1] += 1;
                        any = true;
                    }
                }
                any.then(|| RankDistribution::from_counts(subject, self.labels.clone(), counts))
            })
            .collect()
    }

    /// Texture statistics from judged counts, or `None` if there are none.
    pub fn texture_stats(&self) -> Option<Vec<LexiconStats>> {
        let mut per: Vec<Vec<TierCounts>> = vec![Vec::new(); self.labels.len()];
        for j in self.of_kind(false) {
            if let JudgmentValue::Texture(c) = j.value {
                per[j.label].push(c);
            }
        }
        per.iter().any(|v| !v.is_empty()).then(|| {
            per.iter()
                .enumerate()
                .map(|(k, v)| LexiconStats::from_counts(self.labels.label(k), v))
                .collect()
        })
    }

    pub fn composition_stats(&self) -> Option<Vec<CompositionStats>> {
        let mut per: Vec<Vec<CompositionFlags>> = vec![Vec::new(); self.labels.len()];
        for j in self.of_kind(false) {
            if let JudgmentValue::Composition(f) = j.value {
                per[j.label].push(f);
            }
        }
        per.iter().any(|v| !v.is_empty()).then(|| {
            per.iter()
                .enumerate()
                .map(|(k, v)| CompositionStats::from_flags(self.labels.label(k), v))
                .collect()
        })
    }
}
