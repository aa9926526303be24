//! Segment reconstruction by leftmost-occurrence search.
//!
//! Location is a left-to-right scan with a cursor. An unlocatable sequence
//! leaves the cursor where it was, so later sequences are searched relative
//! to the last successful location.
//!
//! * `Start`: item `i` is the leftmost occurrence starting strictly after the
//!   previous located start. Segment `i` runs from its start to the start of
//!   item `i + 1` (or the document end for the last item).
//! * `End`: item `i` is the leftmost occurrence that starts strictly after and
//!   ends strictly after the previous located match. Segment `i` runs from the
//!   end of item `i - 1` (or the document start) to its own end.
//! * `StartEnd`: the start sequence is searched at/after the end of the
//!   previous located segment and the end sequence at/after the start
//!   sequence. Gaps between segments stay uncovered.

use std::fmt;

use serde::Serialize;

use super::{BoundaryOutput, OutputPattern};
use crate::segmentation::{Document, Segment, Segmentation, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    SequenceNotFound,
    StartSequenceNotFound,
    EndSequenceNotFound,
    RightBoundaryUnlocatable,
    LeftBoundaryUnlocatable,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::SequenceNotFound => "sequence not found",
            DiscardReason::StartSequenceNotFound => "start sequence not found",
            DiscardReason::EndSequenceNotFound => "end sequence not found",
            DiscardReason::RightBoundaryUnlocatable => "right boundary unlocatable",
            DiscardReason::LeftBoundaryUnlocatable => "left boundary unlocatable",
        })
    }
}

/// A discarded item (0-based index into the boundary output).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Discard {
    pub item: usize,
    pub reason: DiscardReason,
}

/// Where an item's sequences were found. Only the fields required by the
/// output pattern are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct ItemLocation {
    pub start_match: Option<Span>,
    pub end_match: Option<Span>,
}

impl ItemLocation {
    /// The span summarizing this location: the matched sequence for the
    /// single-sequence patterns, start-to-end for `StartEnd`.
    pub fn resolved_span(&self) -> Option<Span> {
        match (self.start_match, self.end_match) {
            (Some(s), Some(e)) => Span::new(s.start(), e.end()).ok(),
            (Some(s), None) => Some(s),
            (None, Some(e)) => Some(e),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReconstructionResult {
    /// Surviving segments, ordered and disjoint. Adjacent labels may repeat.
    pub segments: Segmentation,
    /// For each surviving segment, the index of the item that produced it.
    pub sources: Vec<usize>,
    pub discarded: Vec<Discard>,
    /// Per item: the resolved span, or `None` when the item was not located.
    pub locations: Vec<Option<Span>>,
}

impl ReconstructionResult {
    /// A result with no items at all (used for unparseable outputs).
    pub fn empty() -> Self {
        Self {
            segments: Segmentation::default(),
            sources: Vec::new(),
            discarded: Vec::new(),
            locations: Vec::new(),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        self.segments.segments()
    }
}

/// Locates every item's sequence(s). `None` marks an unlocatable item.
pub fn locate_items(doc: &Document, out: &BoundaryOutput) -> Vec<Option<ItemLocation>> {
    let mut locs = Vec::with_capacity(out.len());
    match out.pattern() {
        OutputPattern::Start => {
            let mut prev_start: Option<usize> = None;
            for item in out.items() {
                let seq = item.start_seq.as_deref().unwrap_or_default();
                let from = prev_start.map_or(0, |p| p + 1);
                let found = doc.find_from(seq, from);
                if let Some(m) = found {
                    prev_start = Some(m.start());
                }
                locs.push(found.map(|m| ItemLocation {
                    start_match: Some(m),
                    end_match: None,
                }));
            }
        }
        OutputPattern::End => {
            let mut prev: Option<Span> = None;
            for item in out.items() {
                let seq = item.end_seq.as_deref().unwrap_or_default();
                let len = seq.chars().count();
                let from = prev.map_or(0, |p| (p.start() + 1).max((p.end() + 1).saturating_sub(len)));
                let found = doc.find_from(seq, from);
                if found.is_some() {
                    prev = found;
                }
                locs.push(found.map(|m| ItemLocation {
                    start_match: None,
                    end_match: Some(m),
                }));
            }
        }
        OutputPattern::StartEnd => {
            let mut cursor = 0;
            for item in out.items() {
                let start_seq = item.start_seq.as_deref().unwrap_or_default();
                let end_seq = item.end_seq.as_deref().unwrap_or_default();
                let found = doc.find_from(start_seq, cursor).and_then(|s| {
                    doc.find_from(end_seq, s.start()).map(|e| ItemLocation {
                        start_match: Some(s),
                        end_match: Some(e),
                    })
                });
                if let Some(loc) = found {
                    cursor = loc.end_match.map_or(cursor, |e| e.end());
                }
                locs.push(found);
            }
        }
    }
    locs
}

/// Reconstructs labeled segments from a boundary output. Never fails:
/// unlocatable items are reported in `discarded`.
pub fn reconstruct(doc: &Document, out: &BoundaryOutput) -> ReconstructionResult {
    let locs = locate_items(doc, out);
    reconstruct_from_locations(doc, out, &locs)
}

/// Assembles segments from precomputed item locations.
pub fn reconstruct_from_locations(
    doc: &Document,
    out: &BoundaryOutput,
    locs: &[Option<ItemLocation>],
) -> ReconstructionResult {
    let items = out.items();
    let n = items.len();
    let mut segments = Vec::new();
    let mut sources = Vec::new();
    let mut discarded = Vec::new();

    let mut emit = |i: usize, start: usize, end: usize| {
        // locate_items guarantees start < end for surviving segments
        if let Ok(span) = Span::new(start, end) {
            segments.push(Segment::new(items[i].label.clone(), span));
            sources.push(i);
        }
    };

    for i in 0..n {
        let Some(loc) = locs[i] else {
            let reason = match out.pattern() {
                OutputPattern::StartEnd => {
                    let start_seq = items[i].start_seq.as_deref().unwrap_or_default();
                    // distinguish which of the two sequences failed
                    let cursor = locs[..i]
                        .iter()
                        .rev()
                        .find_map(|l| l.and_then(|l| l.end_match))
                        .map_or(0, |e| e.end());
                    if doc.find_from(start_seq, cursor).is_some() {
                        DiscardReason::EndSequenceNotFound
                    } else {
                        DiscardReason::StartSequenceNotFound
                    }
                }
                _ => DiscardReason::SequenceNotFound,
            };
            discarded.push(Discard { item: i, reason });
            continue;
        };
        match out.pattern() {
            OutputPattern::Start => {
                let start = loc.start_match.map_or(0, |m| m.start());
                let end = if i + 1 == n {
                    Some(doc.len())
                } else {
                    locs[i + 1].and_then(|l| l.start_match).map(|m| m.start())
                };
                match end {
                    Some(end) => emit(i, start, end),
                    None => discarded.push(Discard {
                        item: i,
                        reason: DiscardReason::RightBoundaryUnlocatable,
                    }),
                }
            }
            OutputPattern::End => {
                let end = loc.end_match.map_or(0, |m| m.end());
                let start = if i == 0 {
                    Some(0)
                } else {
                    locs[i - 1].and_then(|l| l.end_match).map(|m| m.end())
                };
                match start {
                    Some(start) => emit(i, start, end),
                    None => discarded.push(Discard {
                        item: i,
                        reason: DiscardReason::LeftBoundaryUnlocatable,
                    }),
                }
            }
            OutputPattern::StartEnd => {
                if let (Some(s), Some(e)) = (loc.start_match, loc.end_match) {
                    emit(i, s.start(), e.end());
                }
            }
        }
    }

    ReconstructionResult {
        segments: Segmentation::new(segments),
        sources,
        discarded,
        locations: locs.iter().map(|l| l.and_then(|l| l.resolved_span())).collect(),
    }
}
