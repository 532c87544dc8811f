use std::ops::Range;

/// Characters that delimit spans (sentence-internal and sentence-final).
pub const SPAN_DELIMITERS: [char; 12] = [',', '.', ';', ':', '!', '?', '，', '。', '；', '：', '！', '？'];

const SENTENCE_TERMINATORS: [char; 6] = ['.', '!', '?', '。', '！', '？'];
const CLOSERS: [char; 10] = [')', ']', '}', '"', '\'', '”', '’', '」', '』', '》'];

fn is_delimiter(c: char) -> bool {
    SPAN_DELIMITERS.contains(&c)
}

/// Punctuation-delimited segmentation of a text.
///
/// `spans` and `delimiters` are byte offsets into `source`. Every byte of the
/// source belongs either to exactly one span or to exactly one delimiter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanSegmentation {
    pub source: String,
    pub spans: Vec<Range<usize>>,
    pub delimiters: Vec<usize>,
}

impl SpanSegmentation {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn span_text(&self, index: usize) -> &str {
        &self.source[self.spans[index].clone()]
    }

    /// Text before the first span (delimiters only).
    pub fn prefix(&self) -> &str {
        let end = self.spans.first().map_or(self.source.len(), |s| s.start);
        &self.source[..end]
    }

    /// Delimiters following span `index` up to the next span (or end of text).
    pub fn trailing(&self, index: usize) -> &str {
        let start = self.spans[index].end;
        let end = self.spans.get(index + 1).map_or(self.source.len(), |s| s.start);
        &self.source[start..end]
    }

    /// Concatenates spans and delimiters back into one string.
    pub fn reassemble(&self) -> String {
        let mut pieces: Vec<(usize, &str)> = self.spans.iter().map(|r| (r.start, &self.source[r.clone()])).collect();
        for &d in &self.delimiters {
            let len = self.source[d..].chars().next().map_or(0, char::len_utf8);
            pieces.push((d, &self.source[d..d + len]));
        }
        pieces.sort_by_key(|(at, _)| *at);
        pieces.into_iter().map(|(_, s)| s).collect()
    }
}

/// Splits `text` at every span delimiter, dropping empty spans.
pub fn segment_spans(text: &str) -> SpanSegmentation {
    let mut spans = Vec::new();
    let mut delimiters = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if is_delimiter(c) {
            if i > start {
                spans.push(start..i);
            }
            delimiters.push(i);
            start = i + c.len_utf8();
        }
    }
    if text.len() > start {
        spans.push(start..text.len());
    }
    SpanSegmentation { source: text.to_owned(), spans, delimiters }
}

/// Splits `text` into sentences: maximal segments ending in a sentence
/// terminator (plus any closing quotes/brackets right after it). The
/// returned ranges tile the whole text; the last one may lack a terminator.
/// Segments consisting only of whitespace are merged into their neighbour.
pub fn segment_sentences(text: &str) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if SENTENCE_TERMINATORS.contains(&c) {
            let mut end = i + c.len_utf8();
            while let Some(&(j, next)) = chars.peek() {
                if SENTENCE_TERMINATORS.contains(&next) || CLOSERS.contains(&next) {
                    end = j + next.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push(start..end);
            start = end;
        }
    }
    if start < text.len() {
        if text[start..].trim().is_empty() {
            match out.last_mut() {
                Some(last) => last.end = text.len(),
                None => out.push(start..text.len()),
            }
        } else {
            out.push(start..text.len());
        }
    }
    out
}
