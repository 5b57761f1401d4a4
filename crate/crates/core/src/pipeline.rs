//! TF-IDF text attribution end to end: fit on the train side, score the test
//! side (optionally transformed).

use crate::corpus::{CaptionRecord, Corpus, LabelSpace, SplitAssignment};
use crate::error::Result;
use crate::features::{TfIdfConfig, TfIdfModel};
use crate::linear::{evaluate, train, LinearModel, Metrics, TrainConfig, TrainReport};
use crate::transform::{transform_record, Transform};

pub struct TextRun {
    pub tfidf: TfIdfModel,
    pub model: LinearModel,
    pub report: TrainReport,
}

fn targets(records: &[&CaptionRecord], labels: &LabelSpace) -> Result<Vec<usize>> {
    records.iter().map(|r| labels.require(&r.source_label)).collect()
}

pub fn fit_text(records: &[&CaptionRecord], labels: &LabelSpace, tfidf: TfIdfConfig, config: &TrainConfig) -> Result<TextRun> {
    let docs: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let tfidf = TfIdfModel::fit(&docs, tfidf)?;
    let xs = tfidf.transform_all(&docs);
    let ys = targets(records, labels)?;
    let (model, report) = train(&xs, &ys, labels, config)?;
    Ok(TextRun { tfidf, model, report })
}

pub fn score_text(run: &TextRun, records: &[&CaptionRecord]) -> Result<Metrics> {
    let docs: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
    let xs = run.tfidf.transform_all(&docs);
    evaluate(&run.model, &xs, &targets(records, &run.model.labels)?)
}

/// Metrics on the untouched test side followed by one entry per transform,
/// each applied to the test side only.
pub fn text_study(
    corpus: &Corpus,
    split: &SplitAssignment,
    tfidf: TfIdfConfig,
    config: &TrainConfig,
    transforms: &[Transform],
) -> Result<(TextRun, Metrics, Vec<Metrics>)> {
    let (train_side, test_side) = split.partition(corpus)?;
    let run = fit_text(&train_side, corpus.labels(), tfidf, config)?;
    let base = score_text(&run, &test_side)?;
    let mut out = Vec::with_capacity(transforms.len());
    for t in transforms {
        let moved: Vec<CaptionRecord> = test_side.iter().map(|r| transform_record(r, *t)).collect();
        let refs: Vec<&CaptionRecord> = moved.iter().collect();
        out.push(score_text(&run, &refs)?);
    }
    Ok((run, base, out))
}
