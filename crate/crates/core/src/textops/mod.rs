//! Language-aware text utilities shared by every other stage.
//!
//! Character classes used throughout:
//!
//! | class                | members                                                        |
//! |----------------------|----------------------------------------------------------------|
//! | span delimiter       | `, . ; : ! ?` and `，。；：！？`                                  |
//! | sentence terminator  | `. ! ?` and `。！？` (closing `) ] } " ' ” ’ 」 』 》` are absorbed) |
//! | punctuation          | ASCII punctuation, U+2000–U+206F, U+3000–U+303F, fullwidth ASCII punctuation (U+FF01–U+FF0F, U+FF1A–U+FF20, U+FF3B–U+FF40, U+FF5B–U+FF65) |
//! | CJK                  | U+3400–U+4DBF, U+4E00–U+9FFF, U+F900–U+FAFF, U+20000–U+2CEAF    |
//!
//! Normalization for containment tests:
//!
//! * English: lowercase, every punctuation or whitespace run becomes one space, trimmed.
//! * Chinese: lowercase only.

mod normalize;
mod spans;
mod tfidf;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use normalize::{contains_answer, find_answer, normalize, NormalizedText};
pub use spans::{segment_sentences, segment_spans, SpanSegmentation, SPAN_DELIMITERS};
pub use tfidf::TfIdfModel;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextError {
    #[error("answer is empty after normalization")]
    EmptyAnswer,
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("tf-idf model needs at least one document")]
    EmptyCorpus,
    #[error("keyword count must be at least 1")]
    ZeroKeywords,
}

/// Corpus language. Serialized as `"en"` / `"zh"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "en")]
    English,
    #[serde(rename = "zh")]
    Chinese,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Language::English => f.write_str("en"),
            Language::Chinese => f.write_str("zh"),
        }
    }
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32,
            0x2000..=0x206F
            | 0x3000..=0x303F
            | 0xFF01..=0xFF0F
            | 0xFF1A..=0xFF20
            | 0xFF3B..=0xFF40
            | 0xFF5B..=0xFF65)
            && !c.is_whitespace()
}

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2CEAF)
}

/// Ordered token list. Never contains an empty token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    tokens: Vec<String>,
    language: Language,
}

impl TokenSeq {
    /// Builds a sequence from arbitrary strings, dropping empty ones.
    pub fn from_tokens<I, S>(tokens: I, language: Language) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens = tokens.into_iter().map(Into::into).filter(|t: &String| !t.is_empty()).collect();
        Self { tokens, language }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    /// Distinct tokens in first-occurrence order.
    pub fn distinct(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.iter().filter(|t| seen.insert(*t)).collect()
    }

    pub fn extend(&mut self, other: TokenSeq) {
        self.tokens.extend(other.tokens);
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.tokens
    }
}

/// Splits text into lowercase word tokens.
///
/// English splits on whitespace and strips leading/trailing punctuation from
/// each word. Chinese emits one token per CJK character and keeps contiguous
/// runs of other alphanumerics whole; everything else separates.
pub fn tokenize(text: &str, language: Language) -> TokenSeq {
    let tokens = match language {
        Language::English => text
            .split_whitespace()
            .map(|w| w.trim_matches(is_punctuation).to_lowercase())
            .filter(|w| !w.is_empty())
            .collect(),
        Language::Chinese => {
            let mut out = Vec::new();
            let mut run = String::new();
            for c in text.chars() {
                if is_cjk(c) {
                    if !run.is_empty() {
                        out.push(std::mem::take(&mut run));
                    }
                    out.push(c.to_string());
                } else if c.is_alphanumeric() {
                    run.extend(c.to_lowercase());
                } else if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
            }
            if !run.is_empty() {
                out.push(run);
            }
            out
        }
    };
    TokenSeq { tokens, language }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn english_strips_edge_punctuation() {
        let seq = tokenize("Magdalen Tower,", Language::English);
        assert_eq!(seq.tokens(), ["magdalen", "tower"]);
    }

    #[test]
    fn chinese_is_character_level_with_latin_runs() {
        let seq = tokenize("北京大学abc", Language::Chinese);
        assert_eq!(seq.tokens(), ["北", "京", "大", "学", "abc"]);
        let seq = tokenize("第2008届，奥运会！", Language::Chinese);
        assert_eq!(seq.tokens(), ["第", "2008", "届", "奥", "运", "会"]);
    }

    #[test]
    fn empty_text_is_empty_sequence() {
        assert!(tokenize("", Language::English).is_empty());
        assert!(tokenize("  ,,, ", Language::Chinese).is_empty());
    }

    #[test]
    fn punctuation_classes() {
        for c in [',', '.', '—', '“', '。', '，', '！', '、'] {
            assert!(is_punctuation(c), "{c:?}");
        }
        for c in ['a', '北', ' ', '\u{3000}', '7'] {
            assert!(!is_punctuation(c), "{c:?}");
        }
    }

    /// Character-class oracle: the token characters, in order, form a
    /// subsequence of the lowercased input, and every input character left
    /// out of the tokens is whitespace or punctuation.
    fn check_english_char_classes(text: &str) {
        let seq = tokenize(text, Language::English);
        let lowered: Vec<char> = text.to_lowercase().chars().collect();
        let wanted: Vec<char> = seq.iter().flat_map(str::chars).collect();
        let mut j = 0;
        let mut dropped = Vec::new();
        for &c in &lowered {
            if j < wanted.len() && wanted[j] == c {
                j += 1;
            } else {
                dropped.push(c);
            }
        }
        assert_eq!(j, wanted.len(), "tokens are not a subsequence of {text:?}");
        for c in dropped {
            assert!(c.is_whitespace() || is_punctuation(c), "dropped {c:?} from {text:?}");
        }
    }

    #[test]
    fn char_class_oracle_on_fixtures() {
        for text in [
            "Mitchell Tower, for example, is modeled after Oxford's Magdalen Tower.",
            "(quoted) \"words\" -- and... more!",
            "a.b c,d e",
        ] {
            check_english_char_classes(text);
        }
    }

    proptest! {
        #[test]
        fn char_class_oracle(text in "[a-zA-Z0-9 ,.;:!?'\"()\\-—]{0,60}") {
            check_english_char_classes(&text);
        }

        #[test]
        fn english_tokenize_is_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text, Language::English);
            let again = tokenize(&once.tokens().join(" "), Language::English);
            prop_assert_eq!(once, again);
        }

        #[test]
        fn no_empty_tokens(text in "\\PC{0,60}") {
            for lang in [Language::English, Language::Chinese] {
                prop_assert!(tokenize(&text, lang).iter().all(|t| !t.is_empty()));
            }
        }
    }
}
