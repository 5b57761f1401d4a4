//! Python bindings. Structured results (metrics, reports, records) cross the
//! boundary as plain dicts and lists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use capgap_core::corpus::{self, CaptionRecord, Corpus, Side, SplitAssignment};
use capgap_core::features::{self, TfIdfConfig, TfIdfModel};
use capgap_core::linear::{self, TrainConfig};
use capgap_core::pipeline::{self, TextRun};
use capgap_core::probe::{self, Grouping};
use capgap_core::transform::{SpecialCharsConfig, Transform};
use capgap_core::{lexicon, reference, synth, util};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn err(e: capgap_core::Error) -> PyErr {
    match e {
        capgap_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        e if e.is_numeric() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_transform(kind: &str, seed: u64, global: bool) -> PyResult<Transform> {
    Ok(match kind.replace('-', "_").as_str() {
        "strip_markdown" => Transform::StripMarkdown,
        "strip_special_chars" => Transform::StripSpecialChars(SpecialCharsConfig::default()),
        "shuffle_words" => Transform::ShuffleWords { seed },
        "shuffle_letters" => Transform::ShuffleLetters { seed, global },
        other => return Err(PyValueError::new_err(format!("unknown transform `{other}`"))),
    })
}

fn train_config(preset: &str, seed: u64) -> PyResult<TrainConfig> {
    let config = match preset {
        "desk" => TrainConfig::desk_sparse(),
        "paper" => TrainConfig::paper_text(),
        other => return Err(PyValueError::new_err(format!("unknown preset `{other}`"))),
    };
    Ok(config.with_seed(seed))
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    features::tokenize(text)
}

#[pyfunction]
#[pyo3(signature = (kind, text, seed = 0, global_ = false))]
fn apply_transform(kind: &str, text: &str, seed: u64, global_: bool) -> PyResult<String> {
    Ok(parse_transform(kind, seed, global_)?.apply(text))
}

/// `(basic, nuanced)` color mentions.
#[pyfunction]
fn count_colors(text: &str) -> (u64, u64) {
    let c = lexicon::count_colors(text);
    (c.basic, c.nuanced)
}

/// `(basic, nuanced)` texture mentions.
#[pyfunction]
fn count_textures(text: &str) -> (u64, u64) {
    let c = lexicon::count_textures(text);
    (c.basic, c.nuanced)
}

#[pyfunction]
fn composition_flags<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &lexicon::composition_flags(text))
}

/// Reference accuracies (percent) keyed by reference name.
#[pyfunction]
fn reference_values<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    for r in reference::REFERENCES {
        let row = PyDict::new(py);
        row.set_item("description", r.description)?;
        row.set_item("total", r.total)?;
        row.set_item("per_class", r.per_class.iter().copied().collect::<BTreeMap<_, _>>())?;
        out.set_item(r.key, row)?;
    }
    Ok(out)
}

#[pyclass(module = "capgap", frozen)]
struct TfIdf {
    inner: TfIdfModel,
}

#[pymethods]
impl TfIdf {
    #[staticmethod]
    #[pyo3(signature = (docs, ngram_min = 1, ngram_max = 2, min_df = 1))]
    fn fit(docs: Vec<String>, ngram_min: usize, ngram_max: usize, min_df: u64) -> PyResult<Self> {
        let mut config = TfIdfConfig::classifier().with_ngrams(ngram_min, ngram_max);
        config.min_df = min_df;
        Ok(Self {
            inner: TfIdfModel::fit(&docs, config).map_err(err)?,
        })
    }

    /// Nonzero weights of the L2-normalized vector, keyed by term.
    fn transform(&self, text: &str) -> BTreeMap<String, f64> {
        let vocab = self.inner.vocabulary();
        self.inner.transform(text).iter().map(|(i, w)| (vocab.term(i).to_string(), w)).collect()
    }

    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary().terms().to_vec()
    }

    fn idf(&self, term: &str) -> Option<f64> {
        self.inner.idf_of(term)
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }
}

#[pyclass(module = "capgap", frozen)]
struct Split {
    inner: SplitAssignment,
}

#[pymethods]
impl Split {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: SplitAssignment::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    /// `"train"`, `"test"`, or `None` for an unknown image id.
    fn side(&self, image_id: &str) -> Option<&'static str> {
        self.inner.side(image_id).map(|s| match s {
            Side::Train => "train",
            Side::Test => "test",
        })
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.inner.count(Side::Train)
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.inner.count(Side::Test)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
}

#[pyclass(module = "capgap", frozen)]
struct CaptionCorpus {
    inner: Corpus,
}

#[pymethods]
impl CaptionCorpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: corpus::load_corpus(&path, None).map_err(err)?,
        })
    }

    /// Builds a corpus from dicts with the caption-record fields.
    #[staticmethod]
    fn from_records(py: Python<'_>, records: &Bound<'_, PyAny>) -> PyResult<Self> {
        let records: Vec<CaptionRecord> = from_py(py, records)?;
        Ok(Self {
            inner: Corpus::new(records, None).map_err(err)?,
        })
    }

    /// Synthetic three-class corpus with injected signature bigrams.
    #[staticmethod]
    #[pyo3(signature = (n_images = 1000, seed = 0))]
    fn fingerprint(n_images: usize, seed: u64) -> PyResult<Self> {
        let config = synth::FingerprintConfig {
            n_images,
            seed,
            ..Default::default()
        };
        Ok(Self {
            inner: synth::fingerprint_corpus(&config).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(err)
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.records())
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().labels().to_vec()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts()
    }

    #[pyo3(signature = (train_frac = 0.8, seed = 0))]
    fn grouped_split(&self, train_frac: f64, seed: u64) -> PyResult<Split> {
        Ok(Split {
            inner: corpus::grouped_split(&self.inner, train_frac, seed).map_err(err)?,
        })
    }

    #[pyo3(signature = (kind, seed = 0, global_ = false))]
    fn transformed(&self, kind: &str, seed: u64, global_: bool) -> PyResult<Self> {
        let t = parse_transform(kind, seed, global_)?;
        Ok(Self {
            inner: capgap_core::transform::apply_to_corpus(&self.inner, t).map_err(err)?,
        })
    }

    /// Per-label color, texture and composition statistics.
    fn lexicon_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let all = lexicon::Analyzers {
            colors: true,
            textures: true,
            composition: true,
        };
        to_py(py, &lexicon::corpus_stats(&self.inner, all))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// TF-IDF features plus a softmax-regression classifier.
#[pyclass(module = "capgap", frozen)]
struct TextClassifier {
    inner: TextRun,
}

#[pymethods]
impl TextClassifier {
    #[staticmethod]
    #[pyo3(signature = (corpus, split, preset = "desk", seed = 0))]
    fn fit(corpus: &CaptionCorpus, split: &Split, preset: &str, seed: u64) -> PyResult<Self> {
        let (train_side, _) = split.inner.partition(&corpus.inner).map_err(err)?;
        let config = train_config(preset, seed)?;
        let run = pipeline::fit_text(&train_side, corpus.inner.labels(), TfIdfConfig::classifier(), &config).map_err(err)?;
        Ok(Self { inner: run })
    }

    fn predict(&self, text: &str) -> PyResult<String> {
        let k = self.inner.model.predict(&self.inner.tfidf.transform(text)).map_err(err)?;
        Ok(self.inner.model.labels.label(k).to_string())
    }

    fn predict_proba(&self, text: &str) -> PyResult<BTreeMap<String, f64>> {
        let p = self.inner.model.predict_proba(&self.inner.tfidf.transform(text)).map_err(err)?;
        Ok(self.inner.model.labels.labels().iter().cloned().zip(p).collect())
    }

    /// Metrics on the test side of `split`, optionally after a transform.
    #[pyo3(signature = (corpus, split, transform = None, seed = 0))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        corpus: &CaptionCorpus,
        split: &Split,
        transform: Option<&str>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let (_, test_side) = split.inner.partition(&corpus.inner).map_err(err)?;
        let moved: Vec<CaptionRecord> = match transform {
            Some(kind) => {
                let t = parse_transform(kind, seed, false)?;
                test_side.iter().map(|r| capgap_core::transform::transform_record(r, t)).collect()
            }
            None => test_side.into_iter().cloned().collect(),
        };
        let refs: Vec<&CaptionRecord> = moved.iter().collect();
        to_py(py, &pipeline::score_text(&self.inner, &refs).map_err(err)?)
    }

    #[getter]
    fn epoch_losses(&self) -> Vec<f64> {
        self.inner.report.epoch_losses.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.model.labels.labels().to_vec()
    }
}

/// Linear probe on an embeddings JSONL file; returns the probe report.
#[pyfunction]
#[pyo3(signature = (embeddings, split, normalize = false, preset = "desk", seed = 0))]
fn probe_embeddings<'py>(
    py: Python<'py>,
    embeddings: PathBuf,
    split: &Split,
    normalize: bool,
    preset: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let set = probe::load_embeddings(&embeddings, normalize, None).map_err(err)?;
    let config = match preset {
        "desk" => TrainConfig::desk_dense(),
        "paper" => TrainConfig::paper_image(),
        other => return Err(PyValueError::new_err(format!("unknown preset `{other}`"))),
    }
    .with_seed(seed);
    let (_, report) = probe::probe_train_eval(&set, &split.inner, Grouping::ItemId, &config).map_err(err)?;
    to_py(py, &report)
}

/// Writes a synthetic Gaussian embedding set (one class mean per axis).
#[pyfunction]
#[pyo3(signature = (path, n_per_class, classes = 3, dim = 16, separation = 2.0, seed = 0))]
fn write_gaussian_embeddings(path: PathBuf, n_per_class: usize, classes: usize, dim: usize, separation: f64, seed: u64) -> PyResult<()> {
    let records = synth::gaussian_embeddings(n_per_class, classes, dim, separation, 1.0, seed).map_err(err)?;
    util::write_jsonl(&path, &records).map_err(err)
}

/// Largest relative error between analytic and finite-difference gradients
/// of the regularized softmax objective.
#[pyfunction]
#[pyo3(signature = (weights, bias, xs, ys, weight_decay = 0.0, label_smoothing = 0.0, epsilon = 1e-5))]
fn grad_check(
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    weight_decay: f64,
    label_smoothing: f64,
    epsilon: f64,
) -> PyResult<f64> {
    let k = bias.len();
    let dim = weights.first().map_or(0, Vec::len);
    if weights.len() != k || weights.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("weights must be a K x D matrix with K = len(bias)"));
    }
    let labels = corpus::LabelSpace::new((0..k).map(|c| c.to_string())).map_err(err)?;
    let mut model = linear::LinearModel::zeros(labels, dim);
    model.weights = weights.concat();
    model.bias = bias;
    linear::grad_check(&model, &xs, &ys, weight_decay, label_smoothing, epsilon).map_err(err)
}

#[pymodule]
fn capgap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<TfIdf>()?;
    m.add_class::<Split>()?;
    m.add_class::<CaptionCorpus>()?;
    m.add_class::<TextClassifier>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(apply_transform, m)?)?;
    m.add_function(wrap_pyfunction!(count_colors, m)?)?;
    m.add_function(wrap_pyfunction!(count_textures, m)?)?;
    m.add_function(wrap_pyfunction!(composition_flags, m)?)?;
    m.add_function(wrap_pyfunction!(reference_values, m)?)?;
    m.add_function(wrap_pyfunction!(probe_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(write_gaussian_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    Ok(())
}
