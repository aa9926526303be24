//! Boundary output patterns.
//!
//! A boundary output lists, for every predicted segment, its label plus a
//! short token sequence taken from the segment's start (`Start`), its end
//! (`End`), or both (`StartEnd`). Full segments are recovered by locating
//! those sequences in the source document, see [`reconstruct`].

mod format;
mod reconstruct;
mod targets;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{
    escape_field, parse, parse_with, serialize, truncate_at_end_marker, unescape_field,
    LineDiagnostic, ParseError, ParseMode, Parsed,
};
pub use reconstruct::{
    locate_items, reconstruct, reconstruct_from_locations, Discard, DiscardReason, ItemLocation,
    ReconstructionResult,
};
pub use targets::{
    make_targets, make_targets_with, targets_from_lengths, TargetOptions, DEFAULT_MAX_SAMPLED_WORDS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundaryError {
    #[error("boundary output has no items")]
    NoItems,
    #[error("item {index} does not conform to the {pattern} pattern")]
    PatternMismatch { index: usize, pattern: OutputPattern },
    #[error("item {index} has an empty token sequence")]
    EmptySequence { index: usize },
    #[error("gold segmentation is not valid and lossless: {0}")]
    InvalidGold(String),
    #[error("cannot synthesize a target for segment {segment}: {reason}")]
    TargetSynthesisFailure { segment: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputPattern {
    Start,
    End,
    StartEnd,
}

impl OutputPattern {
    pub fn has_start(self) -> bool {
        matches!(self, OutputPattern::Start | OutputPattern::StartEnd)
    }

    pub fn has_end(self) -> bool {
        matches!(self, OutputPattern::End | OutputPattern::StartEnd)
    }

    /// Number of tab-separated fields in the line format.
    pub fn field_count(self) -> usize {
        match self {
            OutputPattern::StartEnd => 3,
            _ => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OutputPattern::Start => "start",
            OutputPattern::End => "end",
            OutputPattern::StartEnd => "startend",
        }
    }
}

impl fmt::Display for OutputPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OutputPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "start" => Ok(OutputPattern::Start),
            "end" => Ok(OutputPattern::End),
            "startend" | "start+end" | "start-end" | "start_end" => Ok(OutputPattern::StartEnd),
            other => Err(format!("unknown output pattern `{other}`")),
        }
    }
}

/// One generated `(label, sequence)` entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryItem {
    pub label: String,
    pub start_seq: Option<String>,
    pub end_seq: Option<String>,
}

impl BoundaryItem {
    pub fn start(label: impl Into<String>, seq: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            start_seq: Some(seq.into()),
            end_seq: None,
        }
    }

    pub fn end(label: impl Into<String>, seq: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            start_seq: None,
            end_seq: Some(seq.into()),
        }
    }

    pub fn start_end(
        label: impl Into<String>,
        start: impl Into<String>,
        end: impl Into<String>,
    ) -> Self {
        Self {
            label: label.into(),
            start_seq: Some(start.into()),
            end_seq: Some(end.into()),
        }
    }

    fn conforms(&self, pattern: OutputPattern) -> bool {
        self.start_seq.is_some() == pattern.has_start() && self.end_seq.is_some() == pattern.has_end()
    }

    fn has_blank_sequence(&self) -> bool {
        [&self.start_seq, &self.end_seq]
            .into_iter()
            .flatten()
            .any(|s| s.trim().is_empty())
    }
}

/// A pattern-tagged, non-empty list of boundary items.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BoundaryOutput {
    pattern: OutputPattern,
    items: Vec<BoundaryItem>,
}

impl BoundaryOutput {
    pub fn new(pattern: OutputPattern, items: Vec<BoundaryItem>) -> Result<Self, BoundaryError> {
        if items.is_empty() {
            return Err(BoundaryError::NoItems);
        }
        for (index, item) in items.iter().enumerate() {
            if !item.conforms(pattern) {
                return Err(BoundaryError::PatternMismatch { index, pattern });
            }
            if item.has_blank_sequence() {
                return Err(BoundaryError::EmptySequence { index });
            }
        }
        Ok(Self { pattern, items })
    }

    pub fn pattern(&self) -> OutputPattern {
        self.pattern
    }

    pub fn items(&self) -> &[BoundaryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Returns a copy with item `index` replaced.
    pub fn with_item(&self, index: usize, item: BoundaryItem) -> Result<Self, BoundaryError> {
        let mut items = self.items.clone();
        items[index] = item;
        Self::new(self.pattern, items)
    }
}
