use super::{is_punctuation, Language, TextError};
use std::ops::Range;

/// Normalized text plus, for every normalized byte, the byte range of the
/// source character it came from.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    pub text: String,
    origin: Vec<Range<usize>>,
}

impl NormalizedText {
    /// Maps a byte range of the normalized text back to the source text.
    pub fn source_range(&self, normalized: Range<usize>) -> Range<usize> {
        debug_assert!(normalized.start < normalized.end);
        self.origin[normalized.start].start..self.origin[normalized.end - 1].end
    }
}

pub fn normalize(text: &str, language: Language) -> NormalizedText {
    let mut out = String::with_capacity(text.len());
    let mut origin = Vec::with_capacity(text.len());
    let push = |out: &mut String, origin: &mut Vec<Range<usize>>, c: char, src: Range<usize>| {
        out.push(c);
        origin.extend(std::iter::repeat_n(src, c.len_utf8()));
    };
    match language {
        Language::English => {
            let mut pending_space: Option<Range<usize>> = None;
            for (i, c) in text.char_indices() {
                let src = i..i + c.len_utf8();
                if c.is_whitespace() || is_punctuation(c) {
                    pending_space.get_or_insert(src);
                    continue;
                }
                if let Some(space) = pending_space.take() {
                    if !out.is_empty() {
                        push(&mut out, &mut origin, ' ', space);
                    }
                }
                for lc in c.to_lowercase() {
                    push(&mut out, &mut origin, lc, src.clone());
                }
            }
        }
        Language::Chinese => {
            for (i, c) in text.char_indices() {
                for lc in c.to_lowercase() {
                    push(&mut out, &mut origin, lc, i..i + c.len_utf8());
                }
            }
        }
    }
    NormalizedText { text: out, origin }
}

/// True iff the normalized answer is a substring of the normalized text.
pub fn contains_answer(text: &str, answer: &str, language: Language) -> Result<bool, TextError> {
    let needle = normalize(answer, language).text;
    if needle.is_empty() {
        return Err(TextError::EmptyAnswer);
    }
    Ok(normalize(text, language).text.contains(&needle))
}

/// Source byte ranges of every non-overlapping normalized occurrence of
/// `answer` in `text`, left to right.
pub fn find_answer(text: &str, answer: &str, language: Language) -> Result<Vec<Range<usize>>, TextError> {
    let needle = normalize(answer, language).text;
    if needle.is_empty() {
        return Err(TextError::EmptyAnswer);
    }
    let hay = normalize(text, language);
    Ok(hay.text.match_indices(&needle).map(|(pos, m)| hay.source_range(pos..pos + m.len())).collect())
}
