use std::collections::{HashMap, HashSet};

use capgap_core::corpus::{self, CaptionRecord, Corpus, PromptTier, Side, Variant};
use capgap_core::features::{self, PhraseScoring, TfIdfConfig, TfIdfModel};
use capgap_core::lexicon::{self, Analyzers};
use capgap_core::linear::TrainConfig;
use capgap_core::pipeline;
use capgap_core::synth::{self, FingerprintConfig};
use capgap_core::transform::{self, Transform};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;

const WORDS: [&str; 10] = ["red", "soft", "tree", "the", "lake", "under", "stone", "blue", "velvet", "sky"];

fn record(caption: usize, image: usize, label: usize, words: &[usize]) -> CaptionRecord {
    CaptionRecord {
        caption_id: format!("c{caption}"),
        image_id: format!("i{image}"),
        prompt_tier: PromptTier::ALL[caption % 3],
        source_label: ["a", "b", "c"][label].to_string(),
        text: words.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" "),
        variant: Variant::Raw,
        provenance: None,
    }
}

fn corpus_strategy() -> impl Strategy<Value = Vec<CaptionRecord>> {
    prop::collection::vec((0usize..15, 0usize..3, prop::collection::vec(0usize..WORDS.len(), 1..8)), 3..40).prop_map(|rows| {
        rows.iter()
            .enumerate()
            .map(|(i, (image, label, words))| record(i, *image, if i < 3 { i } else { *label }, words))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_groups_images_and_is_deterministic(records in corpus_strategy(), frac in 0.1f64..0.9, seed in any::<u64>()) {
        let corpus = Corpus::new(records, None).unwrap();
        let split = corpus::grouped_split(&corpus, frac, seed).unwrap();
        let mut side: HashMap<&str, Side> = HashMap::new();
        for r in corpus.records() {
            let s = split.side(&r.image_id).unwrap();
            prop_assert_eq!(*side.entry(&r.image_id).or_insert(s), s);
        }
        let again = corpus::grouped_split(&corpus, frac, seed).unwrap();
        prop_assert_eq!(serde_json::to_string(&split).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn corpus_round_trips_through_jsonl(records in corpus_strategy()) {
        let corpus = Corpus::new(records, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        corpus.write(&path).unwrap();
        let loaded = corpus::load_corpus(&path, None).unwrap();
        prop_assert_eq!(loaded.records(), corpus.records());
        let path2 = dir.path().join("d.jsonl");
        loaded.write(&path2).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn phrase_ranking_ignores_document_order(records in corpus_strategy(), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let rank = |records: Vec<CaptionRecord>| {
            let corpus = Corpus::new(records, None).unwrap();
            let texts: Vec<&str> = corpus.records().iter().map(|r| r.text.as_str()).collect();
            let model = TfIdfModel::fit(&texts, TfIdfConfig::classifier()).unwrap();
            features::top_phrases_per_class(&corpus, &model, 5, &HashSet::new(), PhraseScoring::ClassMean).unwrap()
        };
        prop_assert_eq!(rank(records), rank(shuffled));
    }

    #[test]
    fn lexicon_stats_ignore_caption_order(records in corpus_strategy()) {
        let all = Analyzers { colors: true, textures: true, composition: true };
        let mut reversed = records.clone();
        reversed.reverse();
        let a = lexicon::corpus_stats(&Corpus::new(records, None).unwrap(), all);
        let b = lexicon::corpus_stats(&Corpus::new(reversed, None).unwrap(), all);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn unigram_classifier_is_blind_to_word_order(seed in 0u64..1000) {
        let corpus = synth::fingerprint_corpus(&FingerprintConfig { n_images: 60, seed, ..Default::default() }).unwrap();
        let split = corpus::grouped_split(&corpus, 0.7, seed).unwrap();
        let (run, base, shuffled) = pipeline::text_study(
            &corpus,
            &split,
            TfIdfConfig::classifier().with_ngrams(1, 1),
            &TrainConfig::desk_sparse().with_seed(seed),
            &[Transform::ShuffleWords { seed: seed + 1 }],
        )
        .unwrap();
        prop_assert_eq!(&base, &shuffled[0]);
        let text = &corpus.records()[0].text;
        let moved = transform::shuffle_words(text, seed);
        prop_assert_eq!(run.tfidf.transform(text), run.tfidf.transform(&moved));
    }
}
