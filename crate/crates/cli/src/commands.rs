use std::path::{Path, PathBuf};

use capgap_core::corpus::{self, Corpus, LabelSpace, SplitAssignment};
use capgap_core::features::{self, PhraseScoring, TfIdfConfig, TfIdfModel};
use capgap_core::lexicon::{self, Analyzers, CompositionStats, LexiconStats, RankDistribution};
use capgap_core::linear::{self, LinearModel, Metrics, TrainConfig};
use capgap_core::matching::{self, MatchConfig, ProjectionPair};
use capgap_core::probe::{self, AttributionPair, EmbeddingSet, Grouping};
use capgap_core::report::{self, Baselines, Format, ReportInputs, TransformResult};
use capgap_core::synth::{self, FingerprintConfig, MatchWorld};
use capgap_core::transform::{self, Transform};
use capgap_core::util;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::manifest::Recorder;
use crate::settings::Settings;
use crate::*;

type Res<T = ()> = Result<T, CliError>;

struct Ctx {
    seed: u64,
    settings: Settings,
    rec: Recorder,
}

pub fn run(cli: Cli) -> Res {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let settings = Settings::load(cli.config.as_deref(), &cli.set)?;
    let name = command_name(&cli.command);
    let mut ctx = Ctx {
        seed: cli.seed,
        settings,
        rec: Recorder::new(name, cli.seed, cli.threads),
    };
    if let Some(c) = &cli.config {
        ctx.rec.input(c);
    }
    let (dir, config) = match &cli.command {
        Command::Ingest(a) => ingest(&mut ctx, a)?,
        Command::Split(a) => split(&mut ctx, a)?,
        Command::Transform(a) => transform_cmd(&mut ctx, a)?,
        Command::TfidfTop(a) => tfidf_top(&mut ctx, a)?,
        Command::Wordfreq(a) => wordfreq(&mut ctx, a)?,
        Command::Train(a) => train(&mut ctx, a)?,
        Command::Eval(a) => eval(&mut ctx, a)?,
        Command::Probe(a) => probe_cmd(&mut ctx, a)?,
        Command::Match(a) => match_cmd(&mut ctx, a)?,
        Command::Lexicon(a) => lexicon_cmd(&mut ctx, a)?,
        Command::Judgments(a) => judgments(&mut ctx, a)?,
        Command::Report(a) => report_cmd(&mut ctx, a)?,
        Command::Synth(a) => synth_cmd(&mut ctx, a)?,
    };
    ctx.rec.finish(&dir, config)?;
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Split(_) => "split",
        Command::Transform(_) => "transform",
        Command::TfidfTop(_) => "tfidf-top",
        Command::Wordfreq(_) => "wordfreq",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Probe(_) => "probe",
        Command::Match(_) => "match",
        Command::Lexicon(_) => "lexicon",
        Command::Judgments(_) => "judgments",
        Command::Report(_) => "report",
        Command::Synth(_) => "synth",
    }
}

/// Directory that receives the manifest for a file output.
fn parent_dir(path: &Path) -> Res<PathBuf> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    ensure_dir(&dir)?;
    Ok(dir)
}

fn ensure_dir(dir: &Path) -> Res {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn refuse_overwrite(input: &Path, out: &Path) -> Res {
    if same_file(input, out) {
        return Err(CliError::Usage(format!("output {} would overwrite its input", out.display())));
    }
    Ok(())
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Res {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn parse_labels(s: &Option<String>) -> Res<Option<LabelSpace>> {
    s.as_deref()
        .map(|s| LabelSpace::new(s.split(',').map(str::trim).filter(|l| !l.is_empty())))
        .transpose()
        .map_err(CliError::from)
}

fn load_corpus(ctx: &mut Ctx, path: &Path, labels: Option<LabelSpace>) -> Res<Corpus> {
    ctx.rec.input(path);
    Ok(corpus::load_corpus(path, labels)?)
}

fn load_split(ctx: &mut Ctx, path: &Path) -> Res<SplitAssignment> {
    ctx.rec.input(path);
    Ok(SplitAssignment::load(path)?)
}

fn transform_of(kind: TransformKind, global: bool, seed: u64) -> Transform {
    match kind {
        TransformKind::StripMarkdown => Transform::StripMarkdown,
        TransformKind::StripSpecialChars => Transform::StripSpecialChars(Default::default()),
        TransformKind::ShuffleWords => Transform::ShuffleWords { seed },
        TransformKind::ShuffleLetters => Transform::ShuffleLetters { seed, global },
    }
}

fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> Res<(PathBuf, serde_json::Value)> {
    refuse_overwrite(&a.input, &a.out)?;
    let labels = parse_labels(&a.labels)?;
    let corpus = load_corpus(ctx, &a.input, labels)?;
    let dir = parent_dir(&a.out)?;
    corpus.write(&a.out)?;
    ctx.rec.output(&a.out);
    let counts = corpus.class_counts();
    for (label, n) in corpus.labels().labels().iter().zip(&counts) {
        println!("{label}\t{n}");
    }
    println!("{} captions, {} images", corpus.len(), corpus.image_ids().len());
    Ok((dir, json!({ "labels": corpus.labels() })))
}

fn split(ctx: &mut Ctx, a: &SplitArgs) -> Res<(PathBuf, serde_json::Value)> {
    let frac = a.train_frac.or(ctx.settings.train_frac()?).unwrap_or(0.8);
    let assignment = if let Some(c) = &a.corpus {
        let corpus = load_corpus(ctx, c, None)?;
        corpus::grouped_split(&corpus, frac, ctx.seed)?
    } else {
        let path = a.embeddings.as_ref().expect("clap enforces one source");
        ctx.rec.input(path);
        let set = probe::load_embeddings(path, false, None)?;
        let groups: Vec<String> = set
            .records()
            .iter()
            .map(|r| Grouping::ItemId.group_of(&r.item_id))
            .collect::<Result<_, _>>()?;
        corpus::split_ids(groups.iter().map(String::as_str), frac, ctx.seed)?
    };
    let dir = parent_dir(&a.out)?;
    assignment.save(&a.out)?;
    ctx.rec.output(&a.out);
    println!(
        "train {} / test {} groups",
        assignment.count(corpus::Side::Train),
        assignment.count(corpus::Side::Test)
    );
    Ok((dir, json!({ "train_frac": frac })))
}

fn transform_cmd(ctx: &mut Ctx, a: &TransformArgs) -> Res<(PathBuf, serde_json::Value)> {
    refuse_overwrite(&a.input, &a.out)?;
    let corpus = load_corpus(ctx, &a.input, None)?;
    let t = transform_of(a.kind, a.global, ctx.seed);
    let out = transform::apply_to_corpus(&corpus, t)?;
    let dir = parent_dir(&a.out)?;
    out.write(&a.out)?;
    ctx.rec.output(&a.out);
    Ok((dir, json!({ "transform": t })))
}

fn parse_ngrams(s: &str) -> Res<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let parse = |p: &str| p.parse::<usize>().map_err(|_| CliError::Usage(format!("bad n-gram range `{s}`")));
    match parts.as_slice() {
        [n] => Ok((parse(n)?, parse(n)?)),
        [lo, hi] => Ok((parse(lo)?, parse(hi)?)),
        _ => Err(CliError::Usage(format!("bad n-gram range `{s}`"))),
    }
}

fn tfidf_top(ctx: &mut Ctx, a: &TfidfTopArgs) -> Res<(PathBuf, serde_json::Value)> {
    let corpus = load_corpus(ctx, &a.corpus, None)?;
    let (lo, hi) = parse_ngrams(&a.ngrams)?;
    let mut config = TfIdfConfig::phrases().with_ngrams(lo, hi);
    ctx.settings.apply_tfidf(&mut config)?;
    let exclusion = match &a.exclude {
        Some(p) => {
            ctx.rec.input(p);
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            features::exclusion_set(util::parse_term_list(&text).1)
        }
        None => Default::default(),
    };
    let scoring = match a.scoring {
        Scoring::Mean => PhraseScoring::ClassMean,
        Scoring::VsRest => PhraseScoring::ClassVsRest,
    };
    let texts: Vec<&str> = corpus.records().iter().map(|r| r.text.as_str()).collect();
    let model = TfIdfModel::fit(&texts, config.clone())?;
    let ranked = features::top_phrases_per_class(&corpus, &model, a.k, &exclusion, scoring)?;
    let (header, rows) = features::phrase_table(&ranked);
    let dir = parent_dir(&a.out)?;
    write_csv(&a.out, &header, &rows)?;
    ctx.rec.output(&a.out);
    Ok((dir, json!({ "tfidf": config, "k": a.k, "scoring": scoring })))
}

fn wordfreq(ctx: &mut Ctx, a: &WordfreqArgs) -> Res<(PathBuf, serde_json::Value)> {
    let corpus = load_corpus(ctx, &a.corpus, None)?;
    let freq = features::word_frequencies(&corpus, &a.label, features::english_stopwords())?;
    let mut rows = features::frequency_rows(&freq);
    if let Some(n) = a.top {
        rows.truncate(n);
    }
    let rows: Vec<Vec<String>> = rows.into_iter().map(|(t, c)| vec![t, c.to_string()]).collect();
    let dir = parent_dir(&a.out)?;
    write_csv(&a.out, &["word".into(), "count".into()], &rows)?;
    ctx.rec.output(&a.out);
    Ok((
        dir,
        json!({ "label": a.label, "top": a.top, "stopwords": features::english_stopwords_version() }),
    ))
}

/// Metadata saved next to a trained model so `eval` can rebuild its inputs.
#[derive(Debug, Serialize, Deserialize)]
struct TrainInfo {
    features: Features,
    preset: Preset,
    normalized: bool,
    train: TrainConfig,
    tfidf: Option<TfIdfConfig>,
    n_train: usize,
    epoch_losses: Vec<f64>,
}

fn train_config(ctx: &Ctx, features: Features, preset: Preset) -> Res<TrainConfig> {
    let mut c = match (features, preset) {
        (Features::Tfidf, Preset::Desk) => TrainConfig::desk_sparse(),
        (Features::Tfidf, Preset::Paper) => TrainConfig::paper_text(),
        (Features::Embedding, Preset::Desk) => TrainConfig::desk_dense(),
        (Features::Embedding, Preset::Paper) => TrainConfig::paper_image(),
    }
    .with_seed(ctx.seed);
    ctx.settings.apply_train(&mut c)?;
    c.validate()?;
    Ok(c)
}

fn load_embedding_set(ctx: &mut Ctx, path: &Path, emb: &EmbeddingInput, labels: Option<LabelSpace>) -> Res<EmbeddingSet> {
    ctx.rec.input(path);
    let raw = probe::load_embeddings(path, false, labels)?;
    let raw = match &emb.generator {
        Some(tag) => raw.filter_generator(tag)?,
        None => raw,
    };
    let normalize = match emb.normalize {
        Normalize::On => true,
        Normalize::Off => false,
        Normalize::Auto => raw.encoder_tags().iter().all(|t| t.to_lowercase().contains("clip")),
    };
    if normalize {
        Ok(EmbeddingSet::from_records(raw.records().to_vec(), true, Some(raw.labels().clone()))?)
    } else {
        Ok(raw)
    }
}

fn grouping_corpus(ctx: &mut Ctx, emb: &EmbeddingInput) -> Res<Option<Corpus>> {
    emb.corpus.as_ref().map(|p| load_corpus(ctx, p, None)).transpose()
}

fn grouping(corpus: &Option<Corpus>) -> Grouping<'_> {
    corpus.as_ref().map_or(Grouping::ItemId, Grouping::Corpus)
}

fn train(ctx: &mut Ctx, a: &TrainArgs) -> Res<(PathBuf, serde_json::Value)> {
    let config = train_config(ctx, a.features, a.preset)?;
    let split = load_split(ctx, &a.split)?;
    ensure_dir(&a.out)?;
    let (model, info, tfidf) = match a.features {
        Features::Tfidf => {
            let path = a.emb.corpus.as_ref().ok_or_else(|| CliError::Usage("--features tfidf needs --corpus".into()))?;
            let corpus = load_corpus(ctx, path, None)?;
            let mut tcfg = TfIdfConfig::classifier();
            ctx.settings.apply_tfidf(&mut tcfg)?;
            let (train_side, _) = split.partition(&corpus)?;
            let run = capgap_core::pipeline::fit_text(&train_side, corpus.labels(), tcfg.clone(), &config)?;
            let info = TrainInfo {
                features: a.features,
                preset: a.preset,
                normalized: false,
                train: config.clone(),
                tfidf: Some(tcfg),
                n_train: train_side.len(),
                epoch_losses: run.report.epoch_losses,
            };
            (run.model, info, Some(run.tfidf))
        }
        Features::Embedding => {
            let path = a.embeddings.as_ref().ok_or_else(|| CliError::Usage("--features embedding needs --embeddings".into()))?;
            let set = load_embedding_set(ctx, path, &a.emb, None)?;
            let gc = grouping_corpus(ctx, &a.emb)?;
            let (train_idx, _) = probe::split_embeddings(&set, &split, grouping(&gc))?;
            let xs: Vec<Vec<f64>> = train_idx.iter().map(|&i| set.records()[i].embedding.clone()).collect();
            let ys: Vec<usize> = train_idx
                .iter()
                .map(|&i| set.labels().require(&set.records()[i].source_label))
                .collect::<Result<_, _>>()?;
            let (model, rep) = linear::train(&xs, &ys, set.labels(), &config)?;
            let info = TrainInfo {
                features: a.features,
                preset: a.preset,
                normalized: set.normalized(),
                train: config.clone(),
                tfidf: None,
                n_train: xs.len(),
                epoch_losses: rep.epoch_losses,
            };
            (model, info, None)
        }
    };
    let model_path = a.out.join("model.json");
    model.save(&model_path)?;
    ctx.rec.output(&model_path);
    if let Some(t) = tfidf {
        let p = a.out.join("tfidf.json");
        t.save(&p)?;
        ctx.rec.output(&p);
    }
    let info_path = a.out.join("train_info.json");
    util::write_json(&info_path, &info)?;
    ctx.rec.output(&info_path);
    println!("trained on {} examples, final loss {:.6}", info.n_train, info.epoch_losses.last().copied().unwrap_or(f64::NAN));
    Ok((a.out.clone(), json!({ "train": config, "tfidf": info.tfidf, "normalize": info.normalized })))
}

fn print_metrics(m: &Metrics) {
    println!("accuracy {:.4} (n = {})", m.overall_accuracy, m.n_test);
    for (label, acc) in m.labels.labels().iter().zip(&m.per_class_accuracy) {
        match acc {
            Some(a) => println!("  {label}\t{a:.4}"),
            None => println!("  {label}\t-"),
        }
    }
}

fn eval(ctx: &mut Ctx, a: &EvalArgs) -> Res<(PathBuf, serde_json::Value)> {
    let (model_dir, model_path) = if a.model.is_dir() {
        (a.model.clone(), a.model.join("model.json"))
    } else {
        (a.model.parent().map(Path::to_path_buf).unwrap_or_default(), a.model.clone())
    };
    ctx.rec.input(&model_path);
    let model = LinearModel::load(&model_path)?;
    let info_path = model_dir.join("train_info.json");
    ctx.rec.input(&info_path);
    let info: TrainInfo = util::read_json(&info_path)?;
    let split = a.split.as_ref().map(|p| load_split(ctx, p)).transpose()?;
    let transform = a.transform.map(|k| transform_of(k, a.global, ctx.seed));
    let metrics = match info.features {
        Features::Tfidf => {
            let tfidf_path = model_dir.join("tfidf.json");
            ctx.rec.input(&tfidf_path);
            let tfidf = TfIdfModel::load(&tfidf_path)?;
            let corpus = load_corpus(ctx, &a.test, Some(model.labels.clone()))?;
            let records: Vec<&corpus::CaptionRecord> = match &split {
                Some(s) => s.partition(&corpus)?.1,
                None => corpus.records().iter().collect(),
            };
            let moved: Vec<corpus::CaptionRecord> = match transform {
                Some(t) => records.iter().map(|r| transform::transform_record(r, t)).collect(),
                None => records.iter().map(|r| (*r).clone()).collect(),
            };
            let refs: Vec<&corpus::CaptionRecord> = moved.iter().collect();
            let run = capgap_core::pipeline::TextRun {
                tfidf,
                model,
                report: Default::default(),
            };
            capgap_core::pipeline::score_text(&run, &refs)?
        }
        Features::Embedding => {
            if transform.is_some() {
                return Err(CliError::Usage("--transform applies to tfidf models only".into()));
            }
            let emb = EmbeddingInput {
                corpus: a.emb.corpus.clone(),
                generator: a.emb.generator.clone(),
                normalize: if info.normalized { Normalize::On } else { Normalize::Off },
            };
            let set = load_embedding_set(ctx, &a.test, &emb, Some(model.labels.clone()))?;
            let gc = grouping_corpus(ctx, &a.emb)?;
            let idx: Vec<usize> = match &split {
                Some(s) => probe::split_embeddings(&set, s, grouping(&gc))?.1,
                None => (0..set.len()).collect(),
            };
            let xs: Vec<Vec<f64>> = idx.iter().map(|&i| set.records()[i].embedding.clone()).collect();
            let ys: Vec<usize> = idx
                .iter()
                .map(|&i| set.labels().require(&set.records()[i].source_label))
                .collect::<Result<_, _>>()?;
            linear::evaluate(&model, &xs, &ys)?
        }
    };
    let dir = parent_dir(&a.out)?;
    util::write_json(&a.out, &metrics)?;
    ctx.rec.output(&a.out);
    print_metrics(&metrics);
    Ok((dir, json!({ "transform": transform, "split": a.split.is_some(), "generator": a.emb.generator })))
}

fn probe_cmd(ctx: &mut Ctx, a: &ProbeArgs) -> Res<(PathBuf, serde_json::Value)> {
    let config = train_config(ctx, Features::Embedding, a.preset)?;
    let split = load_split(ctx, &a.split)?;
    let mut set = load_embedding_set(ctx, &a.embeddings, &a.emb, None)?;
    if let Some(o) = &a.originals {
        let emb = EmbeddingInput {
            corpus: None,
            generator: None,
            normalize: if set.normalized() { Normalize::On } else { Normalize::Off },
        };
        let originals = load_embedding_set(ctx, o, &emb, None)?;
        set = set.with_originals(originals.records().to_vec(), &a.original_label)?;
    }
    let gc = grouping_corpus(ctx, &a.emb)?;
    let (model, rep) = probe::probe_train_eval(&set, &split, grouping(&gc), &config)?;
    ensure_dir(&a.out)?;
    let files = [
        ("model.json", serde_json::to_value(&model)?),
        ("probe_report.json", serde_json::to_value(&rep)?),
        ("metrics.json", serde_json::to_value(&rep.metrics)?),
    ];
    for (name, value) in files {
        let p = a.out.join(name);
        util::write_json(&p, &value)?;
        ctx.rec.output(&p);
    }
    print_metrics(&rep.metrics);
    Ok((
        a.out.clone(),
        json!({ "train": config, "normalize": set.normalized(), "generator": a.emb.generator, "original_label": a.originals.as_ref().map(|_| &a.original_label) }),
    ))
}

fn match_cmd(ctx: &mut Ctx, a: &MatchArgs) -> Res<(PathBuf, serde_json::Value)> {
    let mut config = MatchConfig::default();
    config.train.seed = ctx.seed;
    ctx.settings.apply_match(&mut config)?;
    if let Some(d) = a.dim {
        config.shared_dim = d;
    }
    if let Some(t) = a.tau {
        config.tau = t;
    }
    let corpus = load_corpus(ctx, &a.corpus, None)?;
    let labels = Some(corpus.labels().clone());
    ctx.rec.input(&a.text_emb);
    ctx.rec.input(&a.image_emb);
    let text = probe::load_embeddings(&a.text_emb, false, labels.clone())?;
    let image = probe::load_embeddings(&a.image_emb, false, labels)?;
    let image = match &a.generator {
        Some(tag) => image.filter_generator(tag)?,
        None => image,
    };
    let set = matching::build_instances(&corpus, &text, &image)?;
    let split = a.split.as_ref().map(|p| load_split(ctx, p)).transpose()?;
    ensure_dir(&a.out)?;
    let (pair, test) = if a.identity {
        if text.dim() != image.dim() {
            return Err(CliError::Core(capgap_core::Error::DimensionMismatch {
                expected: text.dim(),
                found: image.dim(),
            }));
        }
        let test = match &split {
            Some(s) => set.partition(s)?.1,
            None => set.instances.clone(),
        };
        (ProjectionPair::identity(text.dim(), config.tau)?, test)
    } else {
        let (train_side, test) = set.partition(split.as_ref().expect("clap requires --split"))?;
        let (pair, rep) = matching::train_match(&train_side, &set.labels, &config)?;
        let p = a.out.join("train_report.json");
        util::write_json(&p, &rep)?;
        ctx.rec.output(&p);
        (pair, test)
    };
    let rep = matching::evaluate_match(&pair, &test, &set.labels, set.skipped)?;
    let files = [
        ("projections.json", serde_json::to_value(&pair)?),
        ("match_report.json", serde_json::to_value(&rep)?),
        ("metrics.json", serde_json::to_value(&rep.metrics)?),
    ];
    for (name, value) in files {
        let p = a.out.join(name);
        util::write_json(&p, &value)?;
        ctx.rec.output(&p);
    }
    print_metrics(&rep.metrics);
    println!("skipped {} image embeddings without a complete sibling set", set.skipped);
    Ok((a.out.clone(), json!({ "match": config, "identity": a.identity, "generator": a.generator })))
}

fn lexicon_cmd(ctx: &mut Ctx, a: &LexiconArgs) -> Res<(PathBuf, serde_json::Value)> {
    let corpus = load_corpus(ctx, &a.corpus, None)?;
    let any = a.colors || a.textures || a.composition;
    let analyzers = Analyzers {
        colors: a.colors || !any,
        textures: a.textures || !any,
        composition: a.composition || !any,
    };
    let stats = lexicon::corpus_stats(&corpus, analyzers);
    ensure_dir(&a.out)?;
    let p = a.out.join("lexicon.json");
    util::write_json(&p, &stats)?;
    ctx.rec.output(&p);
    let mut tables: Vec<(&str, (Vec<String>, Vec<Vec<String>>))> = Vec::new();
    if let Some(s) = &stats.colors {
        tables.push(("colors.csv", lexicon::lexicon_table(s)));
    }
    if let Some(s) = &stats.textures {
        tables.push(("textures.csv", lexicon::lexicon_table(s)));
    }
    if let Some(s) = &stats.composition {
        tables.push(("composition.csv", lexicon::composition_table(s)));
    }
    for (name, (header, rows)) in tables {
        let p = a.out.join(name);
        write_csv(&p, &header, &rows)?;
        ctx.rec.output(&p);
    }
    Ok((a.out.clone(), json!({ "analyzers": analyzers, "sources": stats.sources })))
}

/// Summary written by `capgap judgments` and read by `capgap report`.
#[derive(Debug, Serialize, Deserialize)]
struct JudgmentSummary {
    judge_tags: Vec<String>,
    n_items: usize,
    detail_ranks: Vec<RankDistribution>,
    textures: Option<Vec<LexiconStats>>,
    composition: Option<Vec<CompositionStats>>,
}

fn judgments(ctx: &mut Ctx, a: &JudgmentsArgs) -> Res<(PathBuf, serde_json::Value)> {
    let corpus = load_corpus(ctx, &a.corpus, None)?;
    ctx.rec.input(&a.ingest);
    let j = lexicon::ingest_judgments(&a.ingest, &corpus)?;
    let summary = JudgmentSummary {
        judge_tags: j.judge_tags(),
        n_items: j.items.len(),
        detail_ranks: j.rank_distributions(),
        textures: j.texture_stats(),
        composition: j.composition_stats(),
    };
    ensure_dir(&a.out)?;
    let p = a.out.join("judgments.json");
    util::write_json(&p, &summary)?;
    ctx.rec.output(&p);
    println!("{} judgments from {}", summary.n_items, summary.judge_tags.join(", "));
    Ok((a.out.clone(), json!({ "judge_tags": summary.judge_tags })))
}

fn tagged(spec: &str) -> (Option<&str>, &Path) {
    match spec.split_once('=') {
        Some((tag, path)) if !tag.is_empty() => (Some(tag), Path::new(path)),
        _ => (None, Path::new(spec)),
    }
}

fn read_metrics(ctx: &mut Ctx, path: &Path) -> Res<Metrics> {
    ctx.rec.input(path);
    Ok(report::load_metrics(path)?)
}

fn read_input<T: serde::de::DeserializeOwned>(ctx: &mut Ctx, path: &Path) -> Res<T> {
    ctx.rec.input(path);
    Ok(util::read_json(path)?)
}

fn report_cmd(ctx: &mut Ctx, a: &ReportArgs) -> Res<(PathBuf, serde_json::Value)> {
    let formats: Vec<Format> = a
        .format
        .split(',')
        .map(|f| f.trim().parse::<Format>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Res<_>>()?;
    let mut inputs = ReportInputs {
        text: Some(read_metrics(ctx, &a.text)?),
        ..Default::default()
    };
    for spec in &a.image {
        let (tag, path) = tagged(spec);
        let tag = match tag {
            Some(t) => t.to_string(),
            None => path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        };
        let m = read_metrics(ctx, path)?;
        if inputs.image.insert(tag.clone(), m).is_some() {
            return Err(CliError::Usage(format!("image tag `{tag}` given twice")));
        }
    }
    if let Some(p) = &a.four_way {
        inputs.four_way = Some(read_metrics(ctx, p)?);
    }
    if let (Some(rt), Some(ri), Some(kt), Some(ki)) = (&a.keyword_raw_text, &a.keyword_raw_image, &a.keyword_text, &a.keyword_image) {
        let raw = AttributionPair {
            text: read_metrics(ctx, rt)?,
            image: read_metrics(ctx, ri)?,
        };
        let keyword = AttributionPair {
            text: read_metrics(ctx, kt)?,
            image: read_metrics(ctx, ki)?,
        };
        inputs.keyword = Some(probe::keyword_comparison(raw, keyword)?);
    }
    for spec in &a.transform {
        let (name, path) = tagged(spec);
        let name = name.ok_or_else(|| CliError::Usage(format!("--transform expects NAME=PATH, got `{spec}`")))?;
        inputs.transforms.push(TransformResult {
            name: name.to_string(),
            metrics: read_metrics(ctx, path)?,
        });
    }
    for p in &a.probe {
        inputs.probes.push(read_input(ctx, p)?);
    }
    if let Some(p) = &a.matching {
        inputs.matching = Some(read_input(ctx, p)?);
    }
    if let Some(p) = &a.lexicon {
        inputs.lexicon = Some(read_input(ctx, p)?);
    }
    if let Some(p) = &a.judgments {
        let s: JudgmentSummary = read_input(ctx, p)?;
        inputs.detail_ranks = s.detail_ranks;
    }
    if a.baseline_caption.is_some() || a.baseline_image.is_some() {
        inputs.baselines = Some(Baselines {
            caption: a.baseline_caption,
            image: a.baseline_image,
        });
    }
    let report = report::assemble(inputs)?;
    ensure_dir(&a.out)?;
    let written = report.export(&a.out, &formats)?;
    ctx.rec.outputs(written);
    println!("text accuracy {:.4}, headline gap {:.4}, chance {:.4}", report.text.overall_accuracy, report.headline_gap, report.chance);
    for g in &report.gaps {
        println!("  {}\timage {:.4}\tgap {:.4}", g.generator, g.image_accuracy, g.gap);
    }
    if report.reference_checks.is_empty() {
        println!("reference checks: none apply (labels do not map to the published captioners)");
    }
    for c in &report.reference_checks {
        for r in &c.rows {
            println!(
                "reference {} [{}]: expected {:.2} observed {:.2} delta {:+.2} {}",
                c.key,
                r.row,
                r.expected,
                r.observed,
                r.delta,
                if r.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    let formats: Vec<String> = formats.iter().map(|f| format!("{f:?}")).collect();
    Ok((a.out.clone(), json!({ "formats": formats, "digest": report.config_digest })))
}

fn synth_cmd(ctx: &mut Ctx, a: &SynthArgs) -> Res<(PathBuf, serde_json::Value)> {
    ensure_dir(&a.out)?;
    let config = match a.kind {
        SynthKind::Fingerprint => {
            let cfg = FingerprintConfig {
                n_images: a.n_images,
                seed: ctx.seed,
                ..Default::default()
            };
            let corpus = synth::fingerprint_corpus(&cfg)?;
            let p = a.out.join("corpus.jsonl");
            corpus.write(&p)?;
            ctx.rec.output(&p);
            json!({ "kind": "fingerprint", "fingerprint": cfg })
        }
        SynthKind::Gaussian => {
            let recs = synth::gaussian_embeddings(a.n_per_class, a.classes, a.dim, a.separation, 1.0, ctx.seed)?;
            let p = a.out.join("embeddings.jsonl");
            util::write_jsonl(&p, &recs)?;
            ctx.rec.output(&p);
            json!({ "kind": "gaussian", "n_per_class": a.n_per_class, "classes": a.classes, "dim": a.dim, "separation": a.separation })
        }
        SynthKind::MatchIdentity | SynthKind::MatchIdentical => {
            let world = if a.kind == SynthKind::MatchIdentity {
                MatchWorld::Identity
            } else {
                MatchWorld::Identical
            };
            let f = synth::match_world(world, a.n_prompts, a.classes, ctx.seed)?;
            let files = [("corpus.jsonl", None), ("text_embeddings.jsonl", Some(&f.text)), ("image_embeddings.jsonl", Some(&f.image))];
            for (name, recs) in files {
                let p = a.out.join(name);
                match recs {
                    Some(r) => util::write_jsonl(&p, r)?,
                    None => f.corpus.write(&p)?,
                }
                ctx.rec.output(&p);
            }
            json!({ "kind": world, "n_prompts": a.n_prompts, "classes": a.classes })
        }
    };
    Ok((a.out.clone(), config))
}

