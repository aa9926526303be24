//! Documents, labels, spans and segmentations.
//!
//! All offsets are character (code point) offsets, never byte offsets.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised when constructing or slicing the basic types.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("document id must be non-empty")]
    EmptyDocumentId,
    #[error("document `{0}` has empty text")]
    EmptyDocumentText(String),
    #[error("invalid span [{start}, {end})")]
    InvalidSpan { start: usize, end: usize },
    #[error("span [{start}, {end}) exceeds document length {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("invalid label set: {0}")]
    InvalidLabelSet(String),
}

/// Half-open character range `[start, end)`. Never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawSpan")]
pub struct Span {
    start: usize,
    end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self, CoreError> {
        if start >= end {
            return Err(CoreError::InvalidSpan { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    /// Always false; spans are non-empty by construction.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of characters shared with `other`.
    pub fn overlap(&self, other: &Span) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        hi.saturating_sub(lo)
    }

    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }
}

#[derive(Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
}

impl TryFrom<RawSpan> for Span {
    type Error = CoreError;

    fn try_from(raw: RawSpan) -> Result<Self, Self::Error> {
        Span::new(raw.start, raw.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// A non-empty input text with precomputed character and word indices.
#[derive(Debug, Clone)]
pub struct Document {
    id: String,
    text: String,
    /// Byte offset of each char, plus a trailing entry for `text.len()`.
    /// Empty when the text is pure ASCII (char offset == byte offset).
    char_starts: Vec<usize>,
    n_chars: usize,
    words: Vec<Span>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, CoreError> {
        let id = id.into();
        let text = text.into();
        if id.is_empty() {
            return Err(CoreError::EmptyDocumentId);
        }
        if text.is_empty() {
            return Err(CoreError::EmptyDocumentText(id));
        }
        let (char_starts, n_chars) = if text.is_ascii() {
            (Vec::new(), text.len())
        } else {
            let mut starts: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
            let n = starts.len();
            starts.push(text.len());
            (starts, n)
        };
        let words = words(&text).into_iter().map(|w| w.span).collect();
        Ok(Self {
            id,
            text,
            char_starts,
            n_chars,
            words,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in characters.
    pub fn len(&self) -> usize {
        self.n_chars
    }

    pub fn is_empty(&self) -> bool {
        self.n_chars == 0
    }

    fn byte_offset(&self, char_offset: usize) -> usize {
        if self.char_starts.is_empty() {
            char_offset
        } else {
            self.char_starts[char_offset]
        }
    }

    fn char_offset(&self, byte_offset: usize) -> usize {
        if self.char_starts.is_empty() {
            byte_offset
        } else {
            // match positions of a valid UTF-8 needle always fall on char boundaries
            self.char_starts
                .binary_search(&byte_offset)
                .unwrap_or_else(|i| i)
        }
    }

    /// Character slice `[start, end)`; bounds are clamped to the document.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        let end = end.min(self.n_chars);
        let start = start.min(end);
        &self.text[self.byte_offset(start)..self.byte_offset(end)]
    }

    pub fn span_text(&self, span: Span) -> Result<&str, CoreError> {
        if span.end > self.n_chars {
            return Err(CoreError::OutOfBounds {
                start: span.start,
                end: span.end,
                len: self.n_chars,
            });
        }
        Ok(self.slice(span.start, span.end))
    }

    /// Leftmost occurrence of `needle` whose start offset is `>= from`.
    /// Returns the matched character span.
    pub fn find_from(&self, needle: &str, from: usize) -> Option<Span> {
        if needle.is_empty() || from >= self.n_chars {
            return None;
        }
        let byte_from = self.byte_offset(from);
        let pos = self.text[byte_from..].find(needle)? + byte_from;
        let start = self.char_offset(pos);
        let end = self.char_offset(pos + needle.len());
        Some(Span { start, end })
    }

    /// Word spans of the whole document.
    pub fn words(&self) -> &[Span] {
        &self.words
    }

    /// Words of the character range `[start, end)`, clipped to the range.
    /// Equivalent to re-tokenizing `slice(start, end)` and shifting offsets.
    pub fn words_within(&self, start: usize, end: usize) -> Vec<Span> {
        if start >= end {
            return Vec::new();
        }
        let first = self.words.partition_point(|w| w.end <= start);
        self.words[first..]
            .iter()
            .take_while(|w| w.start < end)
            .map(|w| Span {
                start: w.start.max(start),
                end: w.end.min(end),
            })
            .collect()
    }
}

/// An ordered set of distinct segment labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    /// The five-label prompt taxonomy.
    pub const DEFAULT_NAMES: [&'static str; 5] =
        ["instruction", "example", "context", "question", "output format"];

    pub fn new<I, S>(names: I) -> Result<Self, CoreError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(CoreError::InvalidLabelSet(
                "at least two labels are required".into(),
            ));
        }
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() || name.trim() != name {
                return Err(CoreError::InvalidLabelSet(format!(
                    "label {i} is empty or has surrounding whitespace"
                )));
            }
            if name.contains(['\t', '\n', '\r']) {
                return Err(CoreError::InvalidLabelSet(format!(
                    "label `{name}` contains a tab or line break"
                )));
            }
            if names[..i].contains(name) {
                return Err(CoreError::InvalidLabelSet(format!("duplicate label `{name}`")));
            }
        }
        Ok(Self { names })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.names.iter().any(|n| n == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

impl Default for LabelSet {
    fn default() -> Self {
        Self {
            names: Self::DEFAULT_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A labeled span.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub span: Span,
}

impl Segment {
    pub fn new(label: impl Into<String>, span: Span) -> Self {
        Self {
            label: label.into(),
            span,
        }
    }
}

/// An ordered sequence of segments over one document.
///
/// Construction does not enforce the segmentation constraints; generated
/// outputs routinely violate them and are scored rather than rejected. Use
/// [`validate_segmentation`] to check a gold annotation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Segmentation {
    segments: Vec<Segment>,
}

impl Segmentation {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Segment> {
        self.segments.iter()
    }

    pub fn into_segments(self) -> Vec<Segment> {
        self.segments
    }

    /// True iff the spans tile `[0, doc_len)` exactly, in order.
    pub fn is_lossless(&self, doc_len: usize) -> bool {
        let mut cursor = 0;
        for seg in &self.segments {
            if seg.span.start != cursor {
                return false;
            }
            cursor = seg.span.end;
        }
        cursor == doc_len && !self.segments.is_empty()
    }

    /// Total number of characters covered (spans assumed disjoint).
    pub fn covered_chars(&self) -> usize {
        self.segments.iter().map(|s| s.span.len()).sum()
    }
}

impl From<Vec<Segment>> for Segmentation {
    fn from(segments: Vec<Segment>) -> Self {
        Self::new(segments)
    }
}

impl<'a> IntoIterator for &'a Segmentation {
    type Item = &'a Segment;
    type IntoIter = std::slice::Iter<'a, Segment>;

    fn into_iter(self) -> Self::IntoIter {
        self.segments.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OutOfBounds { index: usize },
    Overlap { index: usize },
    AdjacentLabelsEqual { index: usize },
    UnknownLabel { index: usize, label: String },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutOfBounds { index } => write!(f, "span out of bounds at index {index}"),
            Violation::Overlap { index } => write!(f, "overlap at index {index}"),
            Violation::AdjacentLabelsEqual { index } => {
                write!(f, "adjacent labels equal at index {index}")
            }
            Violation::UnknownLabel { index, label } => {
                write!(f, "unknown label `{label}` at index {index}")
            }
            Violation::Empty => write!(f, "segmentation has no segments"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub lossless: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks ordering, disjointness, bounds and adjacent-label distinctness.
pub fn validate_segmentation(doc: &Document, seg: &Segmentation) -> ValidationReport {
    let mut violations = Vec::new();
    if seg.is_empty() {
        violations.push(Violation::Empty);
    }
    for (i, s) in seg.segments.iter().enumerate() {
        if s.span.end > doc.len() {
            violations.push(Violation::OutOfBounds { index: i });
        }
        if i > 0 {
            let prev = &seg.segments[i - 1];
            if prev.span.end > s.span.start {
                violations.push(Violation::Overlap { index: i });
            }
            if prev.label == s.label {
                violations.push(Violation::AdjacentLabelsEqual { index: i });
            }
        }
    }
    ValidationReport {
        violations,
        lossless: seg.is_lossless(doc.len()),
    }
}

/// [`validate_segmentation`] plus label membership.
pub fn validate_segmentation_with_labels(
    doc: &Document,
    seg: &Segmentation,
    labels: &LabelSet,
) -> ValidationReport {
    let mut report = validate_segmentation(doc, seg);
    for (i, s) in seg.segments.iter().enumerate() {
        if !labels.contains(&s.label) {
            report.violations.push(Violation::UnknownLabel {
                index: i,
                label: s.label.clone(),
            });
        }
    }
    report
}

pub fn segment_text<'d>(doc: &'d Document, seg: &Segment) -> Result<&'d str, CoreError> {
    doc.span_text(seg.span)
}

/// A maximal run of non-whitespace characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    pub span: Span,
}

/// Splits `text` into maximal non-whitespace runs with character spans.
pub fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (byte start, char start)
    let mut char_idx = 0;
    for (byte_idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some((b, c)) = current.take() {
                out.push(Word {
                    text: &text[b..byte_idx],
                    span: Span {
                        start: c,
                        end: char_idx,
                    },
                });
            }
        } else if current.is_none() {
            current = Some((byte_idx, char_idx));
        }
        char_idx += 1;
    }
    if let Some((b, c)) = current {
        out.push(Word {
            text: &text[b..],
            span: Span {
                start: c,
                end: char_idx,
            },
        });
    }
    out
}
