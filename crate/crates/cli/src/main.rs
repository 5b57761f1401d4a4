//! `capgap`: flat-file pipeline for caption and generated-image attribution.
//!
//! Exit codes: 0 ok, 1 usage or configuration, 2 data, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod manifest;
mod settings;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(capgap_core::Error),
}

impl From<capgap_core::Error> for CliError {
    fn from(e: capgap_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_config() => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) if e.is_numeric() => write!(f, "numeric failure: {e}"),
            CliError::Core(e) => write!(f, "error: {e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "capgap", version, about = "Attribute captions and generated images to their captioner")]
pub struct Cli {
    /// Master seed for splits, shuffles, initialization and synthesis.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// File of key=value overrides.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// A single key=value override, applied after --config.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a caption JSONL file and write a normalized corpus.
    Ingest(IngestArgs),
    /// Grouped train/test split by image_id (or item id for embeddings).
    Split(SplitArgs),
    /// Apply a text transformation to every caption.
    Transform(TransformArgs),
    /// Distinctive n-grams per class as a CSV table.
    TfidfTop(TfidfTopArgs),
    /// Word frequencies for one class as CSV.
    Wordfreq(WordfreqArgs),
    /// Train a softmax classifier on TF-IDF features or embeddings.
    Train(TrainArgs),
    /// Evaluate a trained model and write Metrics JSON.
    Eval(EvalArgs),
    /// Train and evaluate a linear probe on embeddings.
    Probe(ProbeArgs),
    /// Image-to-caption attribution in a learned shared space.
    Match(MatchArgs),
    /// Color, texture and composition statistics per class.
    Lexicon(LexiconArgs),
    /// Validate and summarize an external judgment file.
    Judgments(JudgmentsArgs),
    /// Assemble the gap report and export it.
    Report(ReportArgs),
    /// Generate synthetic fixtures with known answers.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated label order (defaults to sorted labels).
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long, conflicts_with = "embeddings", required_unless_present = "embeddings")]
    pub corpus: Option<PathBuf>,
    /// Split an embedding file by item id instead of a corpus by image id.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    StripMarkdown,
    StripSpecialChars,
    ShuffleWords,
    ShuffleLetters,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long, value_enum)]
    pub kind: TransformKind,
    /// Shuffle letters across the whole text instead of within each token.
    #[arg(long)]
    pub global: bool,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scoring {
    Mean,
    VsRest,
}

#[derive(Args, Debug)]
pub struct TfidfTopArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Smallest and largest n-gram length, e.g. `2,3`.
    #[arg(long, default_value = "2,3")]
    pub ngrams: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Term list of phrases to drop (one per line, `#` comments).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mean")]
    pub scoring: Scoring,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct WordfreqArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub label: String,
    /// Keep only the most frequent N words.
    #[arg(long)]
    pub top: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    Tfidf,
    Embedding,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalize {
    /// On when every encoder tag names a CLIP encoder.
    Auto,
    On,
    Off,
}

#[derive(Args, Debug)]
pub struct EmbeddingInput {
    /// Caption corpus: the training data for tfidf models, and the source of
    /// image groups for embedding item ids.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Keep only records with this generator tag.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    pub normalize: Normalize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub features: Features,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    /// Embedding file (embedding features).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub emb: EmbeddingInput,
    /// Output directory for the model files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Model directory or its model.json.
    #[arg(long)]
    pub model: PathBuf,
    /// Caption corpus or embedding file, matching the model's features.
    #[arg(long)]
    pub test: PathBuf,
    /// Evaluate only the test side of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[command(flatten)]
    pub emb: EmbeddingInput,
    /// Transform test captions before scoring (tfidf models).
    #[arg(long, value_enum)]
    pub transform: Option<TransformKind>,
    #[arg(long)]
    pub global: bool,
    /// Metrics JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: Preset,
    #[command(flatten)]
    pub emb: EmbeddingInput,
    /// Original-image embeddings added as an extra class.
    #[arg(long)]
    pub originals: Option<PathBuf>,
    #[arg(long, default_value = "original")]
    pub original_label: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MatchArgs {
    #[arg(long)]
    pub text_emb: PathBuf,
    #[arg(long)]
    pub image_emb: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Required unless --identity.
    #[arg(long, required_unless_present = "identity")]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Skip training and score with identity projections (text and image
    /// dimensions must agree).
    #[arg(long)]
    pub identity: bool,
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LexiconArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub colors: bool,
    #[arg(long)]
    pub textures: bool,
    #[arg(long)]
    pub composition: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct JudgmentsArgs {
    #[arg(long)]
    pub ingest: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Text-side Metrics JSON.
    #[arg(long)]
    pub text: PathBuf,
    /// Image-side Metrics JSON, optionally tagged: `sdxl=metrics.json`.
    #[arg(long, required = true)]
    pub image: Vec<String>,
    /// Probe Metrics with originals added as an extra class.
    #[arg(long)]
    pub four_way: Option<PathBuf>,
    /// Raw-prompt text Metrics for the keyword comparison (needs all four keyword flags).
    #[arg(long, requires_all = ["keyword_raw_image", "keyword_text", "keyword_image"])]
    pub keyword_raw_text: Option<PathBuf>,
    /// Raw-prompt image Metrics.
    #[arg(long)]
    pub keyword_raw_image: Option<PathBuf>,
    /// Keyword-prompt text Metrics.
    #[arg(long)]
    pub keyword_text: Option<PathBuf>,
    /// Keyword-prompt image Metrics.
    #[arg(long)]
    pub keyword_image: Option<PathBuf>,
    /// Transformed-test Metrics: `shuffle_words=metrics.json`.
    #[arg(long)]
    pub transform: Vec<String>,
    /// probe_report.json files.
    #[arg(long)]
    pub probe: Vec<PathBuf>,
    /// match_report.json.
    #[arg(long = "match")]
    pub matching: Option<PathBuf>,
    /// lexicon.json from `capgap lexicon`.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// judgments.json from `capgap judgments`.
    #[arg(long)]
    pub judgments: Option<PathBuf>,
    /// Human caption accuracy (fraction), reported as a baseline only.
    #[arg(long)]
    pub baseline_caption: Option<f64>,
    #[arg(long)]
    pub baseline_image: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "json,csv,markdown")]
    pub format: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Three-class caption corpus with injected signature bigrams.
    Fingerprint,
    /// Isotropic Gaussian embedding classes.
    Gaussian,
    MatchIdentity,
    MatchIdentical,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 1000)]
    pub n_images: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Class-mean offset along each class axis, in units of sigma.
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 300)]
    pub n_prompts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("capgap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
