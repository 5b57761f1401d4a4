//! Synthetic fixtures: a fingerprinted caption corpus, Gaussian embedding
//! classes and match worlds with known answers.

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{CaptionRecord, Corpus, LabelSpace, PromptTier, Variant};
use crate::error::{Error, Result};
use crate::probe::EmbeddingRecord;
use crate::util;

const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "an", "of", "in", "on", "with", "and", "is", "are", "at", "by", "near", "to", "its", "from", "under", "over",
    "there", "this", "some", "two", "few", "one", "it", "as",
];

const GENERIC_WORDS: &[&str] = &[
    "shows", "scene", "view", "photo", "small", "large", "old", "new", "open", "bright", "dark", "white", "red", "blue",
    "green", "wooden", "stone", "round", "tall", "wide", "left", "right", "top", "side", "front", "back", "area", "part",
    "group", "pair", "set", "row", "edge", "corner", "surface", "light", "color", "space", "shape", "line",
];

const NOUNS: &[&str] = &[
    "tree", "dog", "cat", "car", "house", "street", "river", "mountain", "beach", "table", "chair", "window", "door", "road",
    "bird", "flower", "field", "boat", "bridge", "city", "building", "person", "child", "woman", "man", "bicycle", "bus",
    "train", "horse", "cow", "lake", "forest", "garden", "kitchen", "room", "bed", "lamp", "book", "cup", "plate", "bowl",
    "fruit", "apple", "bread", "clock", "wall", "roof", "fence", "path", "hill", "cloud", "sun", "moon", "snow", "rock",
    "sand", "grass", "leaf", "shop", "sign", "market", "park", "bench", "ball", "kite", "tent", "cake", "pizza", "shirt",
    "hat", "bag", "shoe", "phone", "desk", "shelf", "sofa", "rug", "vase", "digit", "number", "stroke", "pen", "paper",
];

/// Ten signature bigrams per class. The words are class-disjoint, absent from
/// the base vocabulary and at least six letters long, so a letter shuffle
/// almost never reproduces them.
const SIGNATURES: [&[&str]; 3] = [
    &[
        "lighting suggests",
        "atmosphere conveys",
        "ambient warmth",
        "glowing radiance",
        "tranquil evening",
        "serene ambiance",
        "shadows deepen",
        "luminous backdrop",
        "softly diffused",
        "mellow highlights",
    ],
    &[
        "perspective reveals",
        "partially visible",
        "oblique viewpoint",
        "sharply resolved",
        "distant horizon",
        "camera tilted",
        "panoramic stretch",
        "receding distance",
        "lowered vantage",
        "detailed rendering",
    ],
    &[
        "picture depicts",
        "feature includes",
        "structural layout",
        "geometric arrangement",
        "prominent element",
        "architectural detail",
        "orderly composition",
        "central placement",
        "distinct sections",
        "notable fixtures",
    ],
];

pub const FINGERPRINT_LABELS: [&str; 3] = ["alpha", "beta", "gamma"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintConfig {
    pub n_images: usize,
    /// Signature slots per caption.
    pub slots: usize,
    /// Probability that a slot carries the caption's own class signature.
    pub own_rate: f64,
    /// Probability that a slot carries another class's signature.
    pub cross_rate: f64,
    pub seed: u64,
}

impl Default for FingerprintConfig {
    /// 1000 images × 3 prompt tiers gives 3000 captions per class.
    fn default() -> Self {
        Self {
            n_images: 1000,
            slots: 4,
            own_rate: 0.75,
            cross_rate: 0.03,
            seed: 0,
        }
    }
}

fn tier_length(tier: PromptTier, rng: &mut util::Rng) -> usize {
    let (lo, hi) = match tier {
        PromptTier::Coarse => (10, 16),
        PromptTier::Detailed => (22, 32),
        PromptTier::VeryDetailed => (40, 60),
    };
    rng.random_range(lo..=hi)
}

fn caption(class: usize, topic: &[&str], tier: PromptTier, config: &FingerprintConfig, rng: &mut util::Rng) -> String {
    let len = tier_length(tier, rng);
    let mut words: Vec<String> = (0..len)
        .map(|_| {
            let bucket = rng.random_range(0..10);
            let pool: &[&str] = match bucket {
                0..=3 => FUNCTION_WORDS,
                4..=5 => GENERIC_WORDS,
                _ => topic,
            };
            pool.choose(rng).expect("non-empty pool").to_string()
        })
        .collect();
    let k = SIGNATURES.len();
    for _ in 0..config.slots {
        let u: f64 = rng.random();
        let source = if u < config.own_rate {
            Some(class)
        } else if u < config.own_rate + config.cross_rate {
            Some((class + rng.random_range(1..k)) % k)
        } else {
            None
        };
        let phrase = match source {
            Some(c) => SIGNATURES[c].choose(rng).expect("ten signatures").to_string(),
            None => {
                let a = GENERIC_WORDS.choose(rng).expect("non-empty");
                let b = topic.choose(rng).expect("non-empty");
                format!("{a} {b}")
            }
        };
        // replace two words so the caption length stays tier-controlled
        let at = rng.random_range(0..words.len() - 1);
        words.splice(at..at + 2, phrase.split(' ').map(String::from));
    }
    let mut text = words.join(" ");
    if let Some(first) = text.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    text.push('.');
    text
}

/// A three-class corpus: every image gets one caption per class and prompt
/// tier. Siblings share the image's topic nouns and the tier's length
/// distribution; only the injected signature bigrams differ by class.
pub fn fingerprint_corpus(config: &FingerprintConfig) -> Result<Corpus> {
    if config.n_images < 2 {
        return Err(Error::Config("need at least two images".into()));
    }
    if !(0.0..=1.0).contains(&(config.own_rate + config.cross_rate)) || config.own_rate < 0.0 || config.cross_rate < 0.0 {
        return Err(Error::Config("own_rate + cross_rate must be within [0, 1]".into()));
    }
    let mut records = Vec::with_capacity(config.n_images * 9);
    for img in 0..config.n_images {
        let image_id = format!("img{img:05}");
        let mut topic_rng = util::rng(util::derive_seed(config.seed, &image_id));
        let topic: Vec<&str> = NOUNS.choose_multiple(&mut topic_rng, 8).copied().collect();
        for tier in PromptTier::ALL {
            for (class, label) in FINGERPRINT_LABELS.iter().enumerate() {
                let caption_id = format!("{image_id}-{}-{label}", tier.as_str());
                let mut rng = util::rng(util::derive_seed(config.seed, &caption_id));
                records.push(CaptionRecord {
                    text: caption(class, &topic, tier, config, &mut rng),
                    caption_id,
                    image_id: image_id.clone(),
                    prompt_tier: tier,
                    source_label: label.to_string(),
                    variant: Variant::Raw,
                    provenance: Some("synthetic-fingerprint".into()),
                });
            }
        }
    }
    Corpus::new(records, Some(LabelSpace::new(FINGERPRINT_LABELS)?))
}

pub fn signature_phrases(class: usize) -> &'static [&'static str] {
    SIGNATURES[class]
}

/// Isotropic Gaussian classes: class k has mean `separation · σ · e_k` and
/// covariance `σ² I`. Item ids are `g<k>-<i>`.
pub fn gaussian_embeddings(
    n_per_class: usize,
    k: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<EmbeddingRecord>> {
    if dim < k {
        return Err(Error::Config(format!("dimension {dim} is smaller than K={k}")));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(n_per_class * k);
    for class in 0..k {
        let mut rng = util::rng(util::derive_seed(seed, &format!("class-{class}")));
        for i in 0..n_per_class {
            let mut v: Vec<f64> = (0..dim).map(|_| noise.sample(&mut rng)).collect();
            v[class] += separation * sigma;
            out.push(EmbeddingRecord {
                item_id: format!("g{class}-{i:05}"),
                source_label: format!("class{class}"),
                encoder_tag: format!("gaussian/delta={separation}"),
                generator_tag: None,
                embedding: v,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchWorld {
    /// Candidates are orthonormal basis vectors; each image equals its true
    /// caption's embedding.
    Identity,
    /// Every candidate is the same vector, so no method can beat chance.
    Identical,
}

pub struct MatchFixture {
    pub corpus: Corpus,
    pub text: Vec<EmbeddingRecord>,
    pub image: Vec<EmbeddingRecord>,
}

/// `n_prompts` images with one caption per label (detailed tier) and one
/// generated image per prompt, drawn from a random true caption.
pub fn match_world(world: MatchWorld, n_prompts: usize, k: usize, seed: u64) -> Result<MatchFixture> {
    let labels: Vec<String> = (0..k).map(|c| format!("model{c}")).collect();
    let mut rng = util::rng(seed);
    let shared: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut records = Vec::new();
    let mut text = Vec::new();
    let mut image = Vec::new();
    for p in 0..n_prompts {
        let image_id = format!("p{p:05}");
        let truth = rng.random_range(0..k);
        for (c, label) in labels.iter().enumerate() {
            let caption_id = format!("{image_id}-{label}");
            let embedding = match world {
                MatchWorld::Identity => {
                    let mut e = vec![0.0; k];
                    e[c] = 1.0;
                    e
                }
                MatchWorld::Identical => shared.clone(),
            };
            records.push(CaptionRecord {
                caption_id: caption_id.clone(),
                image_id: image_id.clone(),
                prompt_tier: PromptTier::Detailed,
                source_label: label.clone(),
                text: format!("caption {c} for prompt {p}"),
                variant: Variant::Raw,
                provenance: Some("synthetic-match".into()),
            });
            if c == truth {
                image.push(EmbeddingRecord {
                    item_id: format!("{caption_id}#img"),
                    source_label: label.clone(),
                    encoder_tag: "synthetic-image".into(),
                    generator_tag: Some("synthetic".into()),
                    embedding: embedding.clone(),
                });
            }
            text.push(EmbeddingRecord {
                item_id: caption_id,
                source_label: label.clone(),
                encoder_tag: "synthetic-text".into(),
                generator_tag: None,
                embedding,
            });
        }
    }
    Ok(MatchFixture {
        corpus: Corpus::new(records, Some(LabelSpace::new(labels)?))?,
        text,
        image,
    })
}
