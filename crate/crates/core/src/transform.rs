//! Robustness text transformations: markup removal, special-character
//! removal and seeded word/letter shuffles.

use std::sync::LazyLock;

use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaptionRecord, Corpus, Variant};
use crate::error::Result;
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialCharsConfig {
    /// Map Unicode dashes other than `-` (en/em dash, minus, ...) to a space
    /// instead of deleting them.
    pub dash_to_space: bool,
}

impl Default for SpecialCharsConfig {
    fn default() -> Self {
        Self { dash_to_space: true }
    }
}

/// A text transformation. Shuffles carry their seed; the strips have none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    StripMarkdown,
    StripSpecialChars(SpecialCharsConfig),
    ShuffleWords { seed: u64 },
    ShuffleLetters { seed: u64, global: bool },
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::StripMarkdown => "strip_markdown",
            Transform::StripSpecialChars(_) => "strip_special_chars",
            Transform::ShuffleWords { .. } => "shuffle_words",
            Transform::ShuffleLetters { .. } => "shuffle_letters",
        }
    }

    pub fn apply(&self, text: &str) -> String {
        match *self {
            Transform::StripMarkdown => strip_markdown(text),
            Transform::StripSpecialChars(cfg) => strip_special_chars(text, cfg),
            Transform::ShuffleWords { seed } => shuffle_words(text, seed),
            Transform::ShuffleLetters { seed, global: false } => shuffle_letters(text, seed),
            Transform::ShuffleLetters { seed, global: true } => shuffle_letters_global(text, seed),
        }
    }

    /// Same transform with the seed replaced by one derived from `key`.
    fn keyed(&self, key: &str) -> Transform {
        match *self {
            Transform::ShuffleWords { seed } => Transform::ShuffleWords {
                seed: util::derive_seed(seed, key),
            },
            Transform::ShuffleLetters { seed, global } => Transform::ShuffleLetters {
                seed: util::derive_seed(seed, key),
                global,
            },
            other => other,
        }
    }
}

static LINK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"!?\[([^\]\n]*)\]\([^)\n]*\)").unwrap());
static HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*#{1,6}(?:[ \t]+|$)").unwrap());
static QUOTE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*>[ \t]?").unwrap());
static BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:[-*+]|\d{1,3}[.)])[ \t]+").unwrap());
static RULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(?:[-=_*][ \t]*){3,}$").unwrap());

fn strip_markdown_once(text: &str) -> String {
    let s = RULE.replace_all(text, "");
    let s = LINK.replace_all(&s, "$1");
    let s = HEADING.replace_all(&s, "");
    let s = QUOTE.replace_all(&s, "");
    let s = BULLET.replace_all(&s, "");
    s.chars().filter(|c| !matches!(c, '*' | '_' | '`' | '~')).collect()
}

/// Removes heading markers, emphasis markers, list bullets, block quotes,
/// horizontal rules and link syntax. Iterates to a fixpoint so the result is
/// idempotent; every rule only deletes characters, so this terminates.
pub fn strip_markdown(text: &str) -> String {
    let mut current = text.to_string();
    loop {
        let next = strip_markdown_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn is_dash(c: char) -> bool {
    matches!(c, '\u{2010}'..='\u{2015}' | '\u{2212}' | '\u{FE58}' | '\u{FE63}' | '\u{FF0D}')
}

/// Keeps letters, digits, spaces and `. , ' -`; whitespace becomes a single
/// space and the result is trimmed.
pub fn strip_special_chars(text: &str, config: SpecialCharsConfig) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() || matches!(c, '.' | ',' | '\'' | '-') {
            out.push(c);
        } else if c.is_whitespace() || (config.dash_to_space && is_dash(c)) {
            if !out.is_empty() && !out.ends_with(' ') {
                out.push(' ');
            }
        }
    }
    if out.ends_with(' ') {
        out.pop();
    }
    out
}

/// Permutes the whitespace-separated words; output words are joined by a
/// single space.
pub fn shuffle_words(text: &str, seed: u64) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    words.shuffle(&mut util::rng(seed));
    words.join(" ")
}

/// Permutes characters inside each whitespace-delimited token. Whitespace is
/// left exactly where it was.
pub fn shuffle_letters(text: &str, seed: u64) -> String {
    let mut rng = util::rng(seed);
    let mut out = String::with_capacity(text.len());
    let mut token: Vec<char> = Vec::new();
    let flush = |token: &mut Vec<char>, out: &mut String, rng: &mut util::Rng| {
        token.shuffle(rng);
        out.extend(token.drain(..));
    };
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut token, &mut out, &mut rng);
            out.push(c);
        } else {
            token.push(c);
        }
    }
    flush(&mut token, &mut out, &mut rng);
    out
}

/// Permutes all non-whitespace characters across the whole text while
/// keeping whitespace positions (and so token lengths) fixed.
pub fn shuffle_letters_global(text: &str, seed: u64) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut letters: Vec<char> = chars.iter().copied().filter(|c| !c.is_whitespace()).collect();
    letters.shuffle(&mut util::rng(seed));
    let mut it = letters.into_iter();
    chars
        .into_iter()
        .map(|c| if c.is_whitespace() { c } else { it.next().expect("same count") })
        .collect()
}

/// Applies `transform` to every record. Shuffle seeds are derived per record
/// from `(seed, caption_id)`. Output records are marked `transformed` with the
/// transform name as provenance.
pub fn apply_to_corpus(corpus: &Corpus, transform: Transform) -> Result<Corpus> {
    corpus.map_records(|r| transform_record(r, transform))
}

pub fn transform_record(r: &CaptionRecord, transform: Transform) -> CaptionRecord {
    CaptionRecord {
        text: transform.keyed(&r.caption_id).apply(&r.text),
        variant: Variant::Transformed,
        provenance: Some(transform.name().to_string()),
        ..r.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn markdown_examples() {
        assert_eq!(strip_markdown("**bold** and `code`"), "bold and code");
        assert_eq!(strip_markdown("plain text"), "plain text");
        assert_eq!(strip_markdown("- item one\n- item two"), "item one\nitem two");
        assert_eq!(strip_markdown("## Overview\nSee [the docs](http://x.y) now"), "Overview\nSee the docs now");
        assert_eq!(strip_markdown("1. first\n2) second"), "first\nsecond");
        assert_eq!(strip_markdown("> quoted _word_"), "quoted word");
        assert_eq!(strip_markdown("above\n---\nbelow"), "above\n\nbelow");
        assert_eq!(strip_markdown("*- nested"), "nested");
    }

    #[test]
    fn special_char_examples() {
        let dash = SpecialCharsConfig { dash_to_space: true };
        let nodash = SpecialCharsConfig { dash_to_space: false };
        assert_eq!(strip_special_chars("sky—blue! (vivid)", dash), "sky blue vivid");
        assert_eq!(strip_special_chars("sky—blue! (vivid)", nodash), "skyblue vivid");
        assert_eq!(strip_special_chars("abc123", dash), "abc123");
        assert_eq!(strip_special_chars("a  b", dash), "a b");
        assert_eq!(strip_special_chars("it's a well-lit room, 3.5m", dash), "it's a well-lit room, 3.5m");
    }

    #[test]
    fn shuffle_examples() {
        assert_eq!(shuffle_words("a", 3), "a");
        assert_eq!(shuffle_letters("a", 3), "a");
        assert_eq!(shuffle_words("", 3), "");
        let s = shuffle_letters("hello world", 9);
        let toks: Vec<&str> = s.split(' ').collect();
        assert_eq!(toks.len(), 2);
        assert_eq!(sorted(toks[0]), sorted("hello"));
        assert_eq!(sorted(toks[1]), sorted("world"));
    }

    fn sorted(s: &str) -> Vec<char> {
        let mut v: Vec<char> = s.chars().collect();
        v.sort_unstable();
        v
    }

    fn multiset<'a>(it: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
        let mut m = BTreeMap::new();
        for w in it {
            *m.entry(w).or_insert(0) += 1;
        }
        m
    }

    #[test]
    fn corpus_application_marks_records() {
        use crate::corpus::{Corpus, PromptTier};
        let r = |id: &str, l: &str| CaptionRecord {
            caption_id: id.into(),
            image_id: "i".into(),
            prompt_tier: PromptTier::Coarse,
            source_label: l.into(),
            text: "one two three four five".into(),
            variant: Variant::Raw,
            provenance: None,
        };
        let c = Corpus::new(vec![r("a", "X"), r("b", "Y")], None).unwrap();
        let t = Transform::ShuffleWords { seed: 7 };
        let out = apply_to_corpus(&c, t).unwrap();
        assert_eq!(out.records()[0].variant, Variant::Transformed);
        assert_eq!(out.records()[0].provenance.as_deref(), Some("shuffle_words"));
        assert_eq!(out.records()[0].image_id, "i");
        // per-record seeds: identical texts with different ids shuffle independently
        assert_eq!(apply_to_corpus(&c, t).unwrap(), out);
    }

    proptest! {
        #[test]
        fn strips_are_idempotent(s in "[a-zA-Z0-9 *_`#>\\[\\]()\\n!.,'—-]{0,60}") {
            let once = strip_markdown(&s);
            prop_assert_eq!(strip_markdown(&once), once);
            for cfg in [SpecialCharsConfig { dash_to_space: true }, SpecialCharsConfig { dash_to_space: false }] {
                let once = strip_special_chars(&s, cfg);
                prop_assert_eq!(strip_special_chars(&once, cfg), once);
            }
        }

        #[test]
        fn word_shuffle_preserves_multiset(s in "[a-z ]{0,80}", seed in any::<u64>()) {
            let out = shuffle_words(&s, seed);
            prop_assert_eq!(multiset(out.split_whitespace()), multiset(s.split_whitespace()));
            prop_assert_eq!(shuffle_words(&s, seed), out);
        }

        #[test]
        fn letter_shuffle_preserves_tokens(s in "[a-zé \\n]{0,80}", seed in any::<u64>()) {
            let out = shuffle_letters(&s, seed);
            let a: Vec<&str> = s.split(char::is_whitespace).collect();
            let b: Vec<&str> = out.split(char::is_whitespace).collect();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(sorted(x), sorted(y));
            }
            let g = shuffle_letters_global(&s, seed);
            prop_assert_eq!(sorted(&g), sorted(&s));
            let lens = |t: &str| t.split(char::is_whitespace).map(|w| w.chars().count()).collect::<Vec<_>>();
            prop_assert_eq!(lens(&g), lens(&s));
        }
    }
}
