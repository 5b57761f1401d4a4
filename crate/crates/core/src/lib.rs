//! Attribution of captions and generated images to the captioner that wrote
//! the caption: TF-IDF and embedding probes, caption-image matching, lexicon
//! statistics and report assembly.

pub mod corpus;
pub mod error;
pub mod features;
pub mod lexicon;
pub mod linear;
pub mod matching;
pub mod pipeline;
pub mod probe;
pub mod reference;
pub mod report;
pub mod synth;
pub mod transform;
pub mod util;

pub use corpus::{grouped_split, load_corpus, CaptionRecord, Corpus, LabelSpace, PromptTier, Side, SplitAssignment, Variant};
pub use error::{Error, Result};
pub use features::{tokenize, SparseVector, TfIdfConfig, TfIdfModel};
pub use linear::{evaluate, grad_check, train, LinearModel, Metrics, TrainConfig};
pub use matching::{build_instances, train_match, MatchConfig, ProjectionPair};
pub use probe::{load_embeddings, probe_train_eval, EmbeddingRecord, EmbeddingSet};
pub use report::{assemble, GapReport, ReportInputs};
pub use transform::Transform;
