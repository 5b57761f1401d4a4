//! The cross-modal gap report: text-side vs image-side attribution plus
//! optional ablation and lexical sections, exported as JSON, CSV and
//! markdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::lexicon::{self, CorpusLexiconReport, RankDistribution};
use crate::linear::Metrics;
use crate::matching::MatchReport;
use crate::probe::{KeywordComparison, ProbeReport};
use crate::reference::{self, ReferenceCheck};
use crate::util;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformResult {
    /// Transform name or paraphrase tag (e.g. `paraphrase/1/qwen-2.5-7b`).
    pub name: String,
    pub metrics: Metrics,
}

/// Manually entered human accuracies (fractions). Never computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub caption: Option<f64>,
    pub image: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportInputs {
    pub text: Option<Metrics>,
    /// Image-side metrics per generator tag.
    pub image: BTreeMap<String, Metrics>,
    pub four_way: Option<Metrics>,
    pub keyword: Option<KeywordComparison>,
    pub transforms: Vec<TransformResult>,
    pub probes: Vec<ProbeReport>,
    pub matching: Option<MatchReport>,
    pub lexicon: Option<CorpusLexiconReport>,
    pub detail_ranks: Vec<RankDistribution>,
    pub baselines: Option<Baselines>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorGap {
    pub generator: String,
    pub image_accuracy: f64,
    /// text accuracy − image accuracy.
    pub gap: f64,
}

/// Absent sections are `null` in JSON and listed as absent in markdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub format_version: u32,
    pub labels: LabelSpace,
    pub chance: f64,
    pub text: Metrics,
    pub image: BTreeMap<String, Metrics>,
    pub gaps: Vec<GeneratorGap>,
    /// Gap against the best-performing generator.
    pub headline_gap: f64,
    pub four_way: Option<Metrics>,
    pub keyword: Option<KeywordComparison>,
    pub transforms: Option<Vec<TransformResult>>,
    pub probes: Option<Vec<ProbeReport>>,
    pub matching: Option<MatchReport>,
    pub lexicon: Option<CorpusLexiconReport>,
    pub detail_ranks: Option<Vec<RankDistribution>>,
    pub baselines: Option<Baselines>,
    pub reference_checks: Vec<ReferenceCheck>,
    pub config_digest: String,
}

fn same_labels(section: &str, expected: &LabelSpace, found: &LabelSpace) -> Result<()> {
    if expected != found {
        return Err(Error::LabelMismatch(format!("{section} uses [{found}], report uses [{expected}]")));
    }
    Ok(())
}

fn lexicon_labels<'a>(stats: impl Iterator<Item = &'a str>, labels: &LabelSpace, section: &str) -> Result<()> {
    let found: Vec<&str> = stats.collect();
    if found != labels.labels().iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::LabelMismatch(format!("{section} rows are {found:?}, report uses [{labels}]")));
    }
    Ok(())
}

fn non_empty<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

/// Builds the report. Every Metrics section must share the text label space;
/// the four-way section must be that space extended by exactly one label.
pub fn assemble(inputs: ReportInputs) -> Result<GapReport> {
    let config_digest = util::sha256_hex(&serde_json::to_vec(&inputs)?);
    let text = inputs.text.ok_or_else(|| Error::Empty("text-side metrics are required".into()))?;
    if inputs.image.is_empty() {
        return Err(Error::Empty("at least one image-side metrics file is required".into()));
    }
    let labels = text.labels.clone();
    text.validate()?;
    for (tag, m) in &inputs.image {
        same_labels(&format!("image metrics `{tag}`"), &labels, &m.labels)?;
        m.validate()?;
    }
    if let Some(m) = &inputs.four_way {
        let base = LabelSpace::new(m.labels.labels()[..m.labels.len() - 1].iter().cloned());
        if m.labels.len() != labels.len() + 1 || base.as_ref().ok() != Some(&labels) {
            return Err(Error::LabelMismatch(format!(
                "four-way section uses [{}], expected [{labels}] plus one label",
                m.labels
            )));
        }
        m.validate()?;
    }
    if let Some(k) = &inputs.keyword {
        same_labels("keyword section", &labels, &k.labels)?;
    }
    for t in &inputs.transforms {
        same_labels(&format!("transform `{}`", t.name), &labels, &t.metrics.labels)?;
        t.metrics.validate()?;
    }
    for p in &inputs.probes {
        same_labels("probe section", &labels, &p.metrics.labels)?;
        p.metrics.validate()?;
    }
    if let Some(m) = &inputs.matching {
        same_labels("match section", &labels, &m.metrics.labels)?;
        m.metrics.validate()?;
    }
    if let Some(lex) = &inputs.lexicon {
        if let Some(s) = &lex.colors {
            lexicon_labels(s.iter().map(|r| r.label.as_str()), &labels, "color statistics")?;
        }
        if let Some(s) = &lex.textures {
            lexicon_labels(s.iter().map(|r| r.label.as_str()), &labels, "texture statistics")?;
        }
        if let Some(s) = &lex.composition {
            lexicon_labels(s.iter().map(|r| r.label.as_str()), &labels, "composition statistics")?;
        }
    }
    for d in &inputs.detail_ranks {
        same_labels("detail-rank section", &labels, &d.labels)?;
    }

    let gaps: Vec<GeneratorGap> = inputs
        .image
        .iter()
        .map(|(tag, m)| GeneratorGap {
            generator: tag.clone(),
            image_accuracy: m.overall_accuracy,
            gap: text.overall_accuracy - m.overall_accuracy,
        })
        .collect();
    let headline_gap = gaps.iter().map(|g| g.gap).fold(f64::INFINITY, f64::min);

    let mut report = GapReport {
        format_version: REPORT_FORMAT_VERSION,
        chance: 1.0 / labels.len() as f64,
        labels,
        text,
        image: inputs.image,
        gaps,
        headline_gap,
        four_way: inputs.four_way,
        keyword: inputs.keyword,
        transforms: non_empty(inputs.transforms),
        probes: non_empty(inputs.probes),
        matching: inputs.matching,
        lexicon: inputs.lexicon,
        detail_ranks: non_empty(inputs.detail_ranks),
        baselines: inputs.baselines,
        reference_checks: Vec::new(),
        config_digest,
    };
    report.reference_checks = reference_checks(&report);
    Ok(report)
}

/// Reference comparisons for every section whose labels and tags can be
/// mapped to a published row.
pub fn reference_checks(report: &GapReport) -> Vec<ReferenceCheck> {
    let mut checks = Vec::new();
    if let Some(key) = reference::caption_key(report.labels.labels()) {
        checks.extend(reference::check(&key, &report.text));
    }
    for (tag, m) in &report.image {
        if let Some(g) = reference::generator_key(tag) {
            checks.extend(reference::check(&format!("image_probe/{g}"), m));
        }
    }
    if let Some(m) = &report.four_way {
        checks.extend(reference::check("four_way", m));
    }
    if let Some(k) = &report.keyword {
        checks.extend(reference::check("keyword/text", &k.keyword.text));
        checks.extend(reference::check("keyword/image", &k.keyword.image));
    }
    for t in report.transforms.iter().flatten() {
        let key = if t.name.starts_with("paraphrase/") {
            t.name.clone()
        } else {
            format!("transform/{}", t.name)
        };
        checks.extend(reference::check(&key, &t.metrics));
    }
    for p in report.probes.iter().flatten() {
        if let [tag] = &p.encoder_tags[..] {
            if let Some(e) = reference::encoder_key(tag) {
                checks.extend(reference::check(&format!("encoder_probe/{e}"), &p.metrics));
            }
        }
    }
    if let Some(m) = &report.matching {
        checks.extend(reference::check("match", &m.metrics));
    }
    checks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn pct_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), pct)
}

fn metrics_header(labels: &LabelSpace, first: &str) -> Vec<String> {
    let mut h = vec![first.to_string(), "total".to_string()];
    h.extend(labels.labels().iter().cloned());
    h
}

fn metrics_row(name: &str, m: &Metrics) -> Vec<String> {
    let mut r = vec![name.to_string(), pct(m.overall_accuracy)];
    r.extend(m.per_class_accuracy.iter().map(|a| pct_opt(*a)));
    r
}

impl GapReport {
    /// Named tables, in a fixed order. Only present sections appear.
    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        let mut out = Vec::new();
        out.push(("text_attribution", (metrics_header(&self.labels, "side"), vec![metrics_row("text", &self.text)])));
        let mut rows: Vec<Vec<String>> = self.image.iter().map(|(g, m)| metrics_row(g, m)).collect();
        rows.push({
            let mut r = vec!["chance".to_string(), pct(self.chance)];
            r.extend(std::iter::repeat_n("-".to_string(), self.labels.len()));
            r
        });
        out.push(("image_attribution", (metrics_header(&self.labels, "generator"), rows)));
        out.push((
            "gaps",
            (
                vec!["generator".into(), "text".into(), "image".into(), "gap".into()],
                self.gaps
                    .iter()
                    .map(|g| vec![g.generator.clone(), pct(self.text.overall_accuracy), pct(g.image_accuracy), pct(g.gap)])
                    .collect(),
            ),
        ));
        if let Some(m) = &self.four_way {
            out.push(("four_way", (metrics_header(&m.labels, "setting"), vec![metrics_row("four_way", m)])));
        }
        if let Some(k) = &self.keyword {
            let rows = vec![
                metrics_row("raw/text", &k.raw.text),
                metrics_row("raw/image", &k.raw.image),
                metrics_row("keyword/text", &k.keyword.text),
                metrics_row("keyword/image", &k.keyword.image),
            ];
            out.push(("keyword", (metrics_header(&self.labels, "variant"), rows)));
        }
        if let Some(ts) = &self.transforms {
            let rows = ts.iter().map(|t| metrics_row(&t.name, &t.metrics)).collect();
            out.push(("transforms", (metrics_header(&self.labels, "transform"), rows)));
        }
        if let Some(ps) = &self.probes {
            let rows = ps
                .iter()
                .map(|p| {
                    let name = format!("{}|{}", p.encoder_tags.join("+"), p.generator_tags.join("+"));
                    metrics_row(&name, &p.metrics)
                })
                .collect();
            out.push(("probes", (metrics_header(&self.labels, "encoder|generator"), rows)));
        }
        if let Some(m) = &self.matching {
            out.push(("matching", (metrics_header(&self.labels, "method"), vec![metrics_row("shared_space", &m.metrics)])));
            let header = vec!["bin_low".to_string(), "bin_high".into(), "count".into()];
            let n = m.true_prob_histogram.len() as f64;
            let rows = m
                .true_prob_histogram
                .iter()
                .enumerate()
                .map(|(i, c)| vec![format!("{:.1}", i as f64 / n), format!("{:.1}", (i + 1) as f64 / n), c.to_string()])
                .collect();
            out.push(("matching_true_prob_histogram", (header, rows)));
        }
        if let Some(lex) = &self.lexicon {
            if let Some(s) = &lex.colors {
                out.push(("colors", lexicon::lexicon_table(s)));
            }
            if let Some(s) = &lex.textures {
                out.push(("textures", lexicon::lexicon_table(s)));
            }
            if let Some(s) = &lex.composition {
                out.push(("composition", lexicon::composition_table(s)));
            }
        }
        if let Some(ds) = &self.detail_ranks {
            let k = self.labels.len();
            let mut header = vec!["subject".to_string(), "label".into()];
            header.extend((1..=k).map(|r| format!("rank_{r}_pct")));
            let rows = ds
                .iter()
                .flat_map(|d| {
                    d.percentages.iter().enumerate().map(move |(l, row)| {
                        let mut r = vec![d.subject.clone(), d.labels.label(l).to_string()];
                        r.extend(row.iter().map(|p| format!("{p:.4}")));
                        r
                    })
                })
                .collect();
            out.push(("detail_ranks", (header, rows)));
        }
        if let Some(b) = &self.baselines {
            let rows = vec![
                vec!["caption".to_string(), pct_opt(b.caption)],
                vec!["image".to_string(), pct_opt(b.image)],
            ];
            out.push(("human_baselines", (vec!["task".into(), "accuracy".into()], rows)));
        }
        if !self.reference_checks.is_empty() {
            let header = ["key", "row", "expected", "observed", "delta", "status"].map(String::from).to_vec();
            let rows = self
                .reference_checks
                .iter()
                .flat_map(|c| {
                    c.rows.iter().map(move |r| {
                        vec![
                            c.key.clone(),
                            r.row.clone(),
                            format!("{:.2}", r.expected),
                            format!("{:.2}", r.observed),
                            format!("{:+.2}", r.delta),
                            if r.pass { "pass" } else { "fail" }.to_string(),
                        ]
                    })
                })
                .collect();
            out.push(("reference_checks", (header, rows)));
        }
        out
    }

    pub fn absent_sections(&self) -> Vec<&'static str> {
        let mut absent = Vec::new();
        let flags = [
            ("four_way", self.four_way.is_none()),
            ("keyword", self.keyword.is_none()),
            ("transforms", self.transforms.is_none()),
            ("probes", self.probes.is_none()),
            ("matching", self.matching.is_none()),
            ("lexicon", self.lexicon.is_none()),
            ("detail_ranks", self.detail_ranks.is_none()),
            ("baselines", self.baselines.is_none()),
        ];
        for (name, missing) in flags {
            if missing {
                absent.push(name);
            }
        }
        absent
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Cross-modal attribution gap\n");
        let _ = writeln!(md, "- labels: {}", self.labels);
        let _ = writeln!(md, "- chance: {}%", pct(self.chance));
        let _ = writeln!(md, "- headline gap: {} points", pct(self.headline_gap));
        let _ = writeln!(md, "- config digest: `{}`", self.config_digest);
        if let Some(lex) = &self.lexicon {
            for (section, source) in &lex.sources {
                let _ = writeln!(md, "- {section} source: {source}");
            }
        }
        let absent = self.absent_sections();
        if !absent.is_empty() {
            let _ = writeln!(md, "- absent sections: {}", absent.join(", "));
        }
        for (name, (header, rows)) in self.tables() {
            let _ = writeln!(md, "\n## {name}\n");
            let _ = writeln!(md, "| {} |", header.join(" | "));
            let _ = writeln!(md, "|{}", "---|".repeat(header.len()));
            for r in rows {
                let _ = writeln!(md, "| {} |", r.join(" | "));
            }
        }
        md
    }

    /// Writes the requested formats into `dir` and returns the paths written,
    /// sorted.
    pub fn export(&self, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            Ok(())
        };
        let mut formats = formats.to_vec();
        formats.sort_unstable();
        formats.dedup();
        for f in formats {
            match f {
                Format::Json => put("report.json".into(), self.to_json()?.into_bytes())?,
                Format::Markdown => put("report.md".into(), self.to_markdown().into_bytes())?,
                Format::Csv => {
                    for (name, (header, rows)) in self.tables() {
                        let mut w = csv::Writer::from_writer(Vec::new());
                        let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
                        w.write_record(&header).map_err(io)?;
                        for r in &rows {
                            w.write_record(r).map_err(io)?;
                        }
                        let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
                        put(format!("{name}.csv"), bytes)?;
                    }
                }
            }
        }
        written.sort();
        Ok(written)
    }
}

/// Loads either a bare Metrics file or any JSON object with a `metrics`
/// field (probe, match and eval outputs).
pub fn load_metrics(path: &Path) -> Result<Metrics> {
    let value: serde_json::Value = util::read_json(path)?;
    let inner = value.get("metrics").cloned().unwrap_or(value);
    let m: Metrics = serde_json::from_value(inner).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> LabelSpace {
        LabelSpace::new(["claude", "gemini", "gpt"]).unwrap()
    }

    /// Metrics with the given overall accuracy over 10,000 balanced examples.
    fn metrics_with(acc: f64, labels: &LabelSpace) -> Metrics {
        let k = labels.len();
        let n = 10_000 / k as u64;
        let total = n * k as u64;
        let mut correct = (acc * total as f64).round() as u64;
        let mut confusion = vec![vec![0u64; k]; k];
        for (i, row) in confusion.iter_mut().enumerate() {
            let c = correct.min(n);
            correct -= c;
            row[i] = c;
            row[(i + 1) % k] += n - c;
        }
        Metrics::from_confusion(labels.clone(), confusion)
    }

    fn inputs(text: Metrics, image: Metrics) -> ReportInputs {
        ReportInputs {
            text: Some(text),
            image: BTreeMap::from([("flux-schnell".to_string(), image)]),
            ..Default::default()
        }
    }

    #[test]
    fn gap_arithmetic() {
        let text = Metrics::from_confusion(labels(), vec![vec![3318, 0, 0], vec![0, 3318, 0], vec![47, 0, 3317]]);
        let image = Metrics::from_confusion(labels(), vec![vec![4985, 5015, 0], vec![0, 0, 0], vec![0, 0, 0]]);
        assert!((text.overall_accuracy - 0.9953).abs() < 1e-4);
        let r = assemble(inputs(text.clone(), image.clone())).unwrap();
        assert!((r.headline_gap - (text.overall_accuracy - 0.4985)).abs() <= 1e-12);
        assert!((r.chance - 1.0 / 3.0).abs() <= 1e-15);
        // the published pair composes to the published gap
        assert!((0.9953f64 - 0.4985 - 0.4968).abs() < 1e-12);
        let same = assemble(inputs(text.clone(), text)).unwrap();
        assert_eq!(same.headline_gap, 0.0);
    }

    #[test]
    fn label_mismatch_is_rejected() {
        let two = LabelSpace::new(["a", "b"]).unwrap();
        assert!(matches!(
            assemble(inputs(metrics_with(0.9, &labels()), metrics_with(0.5, &two))),
            Err(Error::LabelMismatch(_))
        ));
        let mut i = inputs(metrics_with(0.9, &labels()), metrics_with(0.5, &labels()));
        i.four_way = Some(metrics_with(0.5, &labels().extended("original").unwrap()));
        assert!(assemble(i.clone()).is_ok());
        i.four_way = Some(metrics_with(0.5, &labels()));
        assert!(assemble(i).is_err());
    }

    #[test]
    fn export_round_trip_and_stability() {
        let mut i = inputs(metrics_with(0.9953, &labels()), metrics_with(0.4985, &labels()));
        i.transforms.push(TransformResult {
            name: "shuffle_words".into(),
            metrics: metrics_with(0.9942, &labels()),
        });
        let r = assemble(i).unwrap();
        assert!(r.reference_checks.iter().any(|c| c.key == "caption/claude+gemini+gpt"));
        assert!(r.reference_checks.iter().any(|c| c.key == "transform/shuffle_words" && c.pass()));
        let dir = tempfile::tempdir().unwrap();
        let all = [Format::Json, Format::Csv, Format::Markdown];
        let files = r.export(dir.path(), &all).unwrap();
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(GapReport::from_json(&json).unwrap(), r);
        let first: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).unwrap()).collect();
        let again = r.export(dir.path(), &all).unwrap();
        assert_eq!(files, again);
        let second: Vec<Vec<u8>> = again.iter().map(|p| std::fs::read(p).unwrap()).collect();
        assert_eq!(first, second);
        let md = r.to_markdown();
        assert_eq!(md.matches("\n## ").count(), r.tables().len());
        assert!(md.contains("absent sections: four_way, keyword"));
    }

    #[test]
    fn rank_rows_sum_to_100() {
        let d = RankDistribution::from_counts("captions", labels(), vec![vec![10, 5, 3], vec![84, 10, 6], vec![1, 27, 72]]);
        let mut i = inputs(metrics_with(0.99, &labels()), metrics_with(0.5, &labels()));
        i.detail_ranks.push(d);
        let r = assemble(i).unwrap();
        let (_, (_, rows)) = r.tables().into_iter().find(|(n, _)| *n == "detail_ranks").unwrap();
        for row in rows {
            let s: f64 = row[2..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
            assert!((s - 100.0).abs() <= 0.01 + 1e-9, "{s}");
        }
    }
}
