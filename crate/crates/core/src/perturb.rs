//! Intermediate candidates: single-edit perturbations of a candidate.
//!
//! A perturbation moves one boundary of a surviving segment by one word
//! (shorten or extend, on either side) or swaps its label. Boundary moves
//! are realized by editing boundary sequences:
//!
//! * `Start`: shortening a segment on the left drops the first word of its
//!   starting sequence; extending it on the left prepends the word before
//!   it. Right-side edits act on the next item's starting sequence.
//! * `End`: mirrored on ending sequences (append the next word, drop the
//!   last word). Left-side edits act on the previous item's ending sequence.
//! * `StartEnd`: the segment's own start or end sequence is edited; an
//!   overlapping neighbor is pushed back by one word.
//!
//! If an edit leaves a sequence empty, mislocated, or overlapping a
//! neighbor's region, the affected sequences are re-derived as the
//! shortest word prefix (or suffix) of their intended span that locates
//! there. Edits that cannot be realized this way are illegal.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::boundary::{locate_items, reconstruct, BoundaryItem, BoundaryOutput, ItemLocation, OutputPattern, ReconstructionResult};
use crate::metrics::{self, MetricError, RewardBreakdown};
use crate::segmentation::{Document, LabelSet, Segmentation, Span};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("illegal perturbation: {0}")]
    IllegalPerturbation(String),
    #[error("no legal perturbations for this candidate")]
    NoPerturbations,
    #[error("steps must be 1 or 2, got {0}")]
    InvalidSteps(usize),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// One scored rollout output. `output` is `None` for placeholder candidates
/// standing in for unparseable generations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub output: Option<BoundaryOutput>,
    pub recon: ReconstructionResult,
    pub score: RewardBreakdown,
}

impl Candidate {
    /// Reconstructs and scores `output` against `gold`.
    pub fn score(doc: &Document, gold: &Segmentation, output: BoundaryOutput) -> Result<Self, MetricError> {
        let recon = reconstruct(doc, &output);
        let score = metrics::reward(doc, recon.segments(), gold.segments())?;
        Ok(Self {
            output: Some(output),
            recon,
            score,
        })
    }

    pub fn placeholder() -> Self {
        Self {
            output: None,
            recon: ReconstructionResult::empty(),
            score: RewardBreakdown::zero(),
        }
    }

    pub fn reward(&self) -> f64 {
        self.score.reward
    }

    pub fn is_placeholder(&self) -> bool {
        self.output.is_none()
    }
}

/// Perturbation kinds, in tie-breaking order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum PerturbationKind {
    ShortenLeft,
    ShortenRight,
    ExtendLeft,
    ExtendRight,
    Relabel(String),
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::ShortenLeft => f.write_str("shorten_left"),
            PerturbationKind::ShortenRight => f.write_str("shorten_right"),
            PerturbationKind::ExtendLeft => f.write_str("extend_left"),
            PerturbationKind::ExtendRight => f.write_str("extend_right"),
            PerturbationKind::Relabel(l) => write!(f, "relabel({l})"),
        }
    }
}

/// An edit of surviving segment `segment_index` of a candidate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Perturbation {
    pub segment_index: usize,
    pub kind: PerturbationKind,
}

impl Perturbation {
    pub fn new(segment_index: usize, kind: PerturbationKind) -> Self {
        Self { segment_index, kind }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind, self.segment_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Side {
    Start,
    End,
}

/// Required location of an item: the start offset of its starting match
/// and/or the end offset of its ending match, per pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Anchor {
    start: Option<usize>,
    end: Option<usize>,
}

fn anchor_of(pattern: OutputPattern, loc: &ItemLocation) -> Anchor {
    Anchor {
        start: if pattern.has_start() { loc.start_match.map(|m| m.start()) } else { None },
        end: if pattern.has_end() { loc.end_match.map(|m| m.end()) } else { None },
    }
}

fn err(msg: impl Into<String>) -> PerturbError {
    PerturbError::IllegalPerturbation(msg.into())
}

/// The last word ending at or before `offset` (clipped to it).
fn word_before(doc: &Document, offset: usize) -> Option<Span> {
    let words = doc.words();
    let idx = words.partition_point(|w| w.start() < offset);
    let w = *words.get(idx.checked_sub(1)?)?;
    Span::new(w.start(), w.end().min(offset)).ok()
}

/// The first word starting at or after `offset` (clipped to it).
fn word_after(doc: &Document, offset: usize) -> Option<Span> {
    let words = doc.words();
    let idx = words.partition_point(|w| w.end() <= offset);
    let w = *words.get(idx)?;
    Span::new(w.start().max(offset), w.end()).ok()
}

/// Locations and derived data shared by enumeration and application.
struct Layout<'a> {
    doc: &'a Document,
    out: &'a BoundaryOutput,
    locs: Vec<Option<ItemLocation>>,
    recon: ReconstructionResult,
}

impl<'a> Layout<'a> {
    fn new(doc: &'a Document, out: &'a BoundaryOutput) -> Self {
        let locs = locate_items(doc, out);
        let recon = crate::boundary::reconstruct_from_locations(doc, out, &locs);
        Self { doc, out, locs, recon }
    }

    fn pattern(&self) -> OutputPattern {
        self.out.pattern()
    }

    fn target(&self) -> Vec<Option<Anchor>> {
        let p = self.pattern();
        self.locs.iter().map(|l| l.as_ref().map(|l| anchor_of(p, l))).collect()
    }

    fn prev_located(&self, item: usize) -> Option<usize> {
        (0..item).rev().find(|&j| self.locs[j].is_some())
    }

    fn next_located(&self, item: usize) -> Option<usize> {
        (item + 1..self.locs.len()).find(|&j| self.locs[j].is_some())
    }

    fn start_match(&self, item: usize) -> Option<Span> {
        self.locs[item].and_then(|l| l.start_match)
    }

    fn end_match(&self, item: usize) -> Option<Span> {
        self.locs[item].and_then(|l| l.end_match)
    }

    fn seq_words(&self, m: Span) -> Vec<Span> {
        self.doc.words_within(m.start(), m.end())
    }
}

/// A planned edit: the new target plus literal sequence edits.
struct Plan {
    target: Vec<Option<Anchor>>,
    /// `(item, side, new text)`; `None` requests re-derivation.
    literal: Vec<(usize, Side, Option<String>)>,
    relabel: Option<(usize, String)>,
}

fn plan(layout: &Layout<'_>, p: &Perturbation, labels: &LabelSet) -> Result<Plan, PerturbError> {
    let segs = layout.recon.segments();
    let seg = segs
        .get(p.segment_index)
        .ok_or_else(|| err(format!("no surviving segment {}", p.segment_index)))?;
    let item = layout.recon.sources[p.segment_index];
    let n_items = layout.out.len();
    let (s, e) = (seg.span.start(), seg.span.end());
    let doc = layout.doc;
    let words = doc.words_within(s, e);
    let mut target = layout.target();
    let mut literal = Vec::new();

    if let PerturbationKind::Relabel(new) = &p.kind {
        if !labels.contains(new) {
            return Err(err(format!("label `{new}` not in label set")));
        }
        if *new == seg.label {
            return Err(err("relabel to the current label"));
        }
        let neighbors = [
            p.segment_index.checked_sub(1).and_then(|i| segs.get(i)),
            segs.get(p.segment_index + 1),
        ];
        if neighbors.iter().flatten().any(|n| n.label == *new) {
            return Err(err("relabel to a neighboring segment's label"));
        }
        return Ok(Plan {
            target,
            literal,
            relabel: Some((item, new.clone())),
        });
    }

    let shorten = matches!(p.kind, PerturbationKind::ShortenLeft | PerturbationKind::ShortenRight);
    if shorten && words.len() < 2 {
        return Err(err("cannot shorten a one-word segment"));
    }
    let region_words = |a: usize, b: usize| doc.words_within(a, b);

    match layout.pattern() {
        OutputPattern::Start => {
            let m = |j: usize| layout.start_match(j).ok_or_else(|| err("item not located"));
            // end of the text owned by item j (up to the next located start)
            let owned_end = |j: usize| {
                layout
                    .next_located(j)
                    .and_then(|k| layout.start_match(k))
                    .map_or(doc.len(), |mm| mm.start())
            };
            let drop_first = |mm: Span| {
                let sw = layout.seq_words(mm);
                (sw.len() >= 2).then(|| doc.slice(sw[1].start(), mm.end()).to_string())
            };
            match p.kind {
                PerturbationKind::ShortenLeft => {
                    let mm = m(item)?;
                    target[item] = Some(Anchor { start: Some(words[1].start()), end: None });
                    literal.push((item, Side::Start, drop_first(mm)));
                }
                PerturbationKind::ExtendLeft => {
                    let w = word_before(doc, s).ok_or_else(|| err("no word before the segment"))?;
                    if let Some(prev) = layout.prev_located(item) {
                        let prev_start = m(prev)?.start();
                        if prev == item - 1 && region_words(prev_start, s).len() < 2 {
                            return Err(err("would empty the previous one-word segment"));
                        }
                        if w.start() <= prev_start {
                            return Err(err("extension crosses the previous located sequence"));
                        }
                    }
                    let mm = m(item)?;
                    target[item] = Some(Anchor { start: Some(w.start()), end: None });
                    literal.push((item, Side::Start, Some(doc.slice(w.start(), mm.end()).to_string())));
                }
                PerturbationKind::ShortenRight => {
                    if item + 1 >= n_items {
                        return Err(err("last segment has no right boundary sequence"));
                    }
                    let next = m(item + 1)?;
                    let w = words[words.len() - 1];
                    target[item + 1] = Some(Anchor { start: Some(w.start()), end: None });
                    literal.push((item + 1, Side::Start, Some(doc.slice(w.start(), next.end()).to_string())));
                }
                PerturbationKind::ExtendRight => {
                    if item + 1 >= n_items {
                        return Err(err("last segment has no right boundary sequence"));
                    }
                    let next = m(item + 1)?;
                    let nw = region_words(e, owned_end(item + 1));
                    if nw.len() < 2 {
                        return Err(err("would empty the next one-word segment"));
                    }
                    target[item + 1] = Some(Anchor { start: Some(nw[1].start()), end: None });
                    literal.push((item + 1, Side::Start, drop_first(next)));
                }
                PerturbationKind::Relabel(_) => unreachable!(),
            }
        }
        OutputPattern::End => {
            let m = |j: usize| layout.end_match(j).ok_or_else(|| err("item not located"));
            let owned_start = |j: usize| {
                layout
                    .prev_located(j)
                    .and_then(|k| layout.end_match(k))
                    .map_or(0, |mm| mm.end())
            };
            let drop_last = |mm: Span| {
                let sw = layout.seq_words(mm);
                (sw.len() >= 2).then(|| doc.slice(mm.start(), sw[sw.len() - 2].end()).to_string())
            };
            match p.kind {
                PerturbationKind::ShortenLeft => {
                    if item == 0 {
                        return Err(err("first segment has no left boundary sequence"));
                    }
                    let prev = m(item - 1)?;
                    let w = words[0];
                    target[item - 1] = Some(Anchor { start: None, end: Some(w.end()) });
                    literal.push((item - 1, Side::End, Some(doc.slice(prev.start(), w.end()).to_string())));
                }
                PerturbationKind::ExtendLeft => {
                    if item == 0 {
                        return Err(err("first segment has no left boundary sequence"));
                    }
                    let prev = m(item - 1)?;
                    let pw = region_words(owned_start(item - 1), s);
                    if pw.len() < 2 {
                        return Err(err("would empty the previous one-word segment"));
                    }
                    target[item - 1] = Some(Anchor { start: None, end: Some(pw[pw.len() - 2].end()) });
                    literal.push((item - 1, Side::End, drop_last(prev)));
                }
                PerturbationKind::ShortenRight => {
                    let mm = m(item)?;
                    target[item] = Some(Anchor { start: None, end: Some(words[words.len() - 2].end()) });
                    literal.push((item, Side::End, drop_last(mm)));
                }
                PerturbationKind::ExtendRight => {
                    let w = word_after(doc, e).ok_or_else(|| err("no word after the segment"))?;
                    if let Some(next) = layout.next_located(item) {
                        let next_end = m(next)?.end();
                        if next == item + 1 && region_words(e, next_end).len() < 2 {
                            return Err(err("would empty the next one-word segment"));
                        }
                        if w.end() >= next_end {
                            return Err(err("extension crosses the next located sequence"));
                        }
                    }
                    let mm = m(item)?;
                    target[item] = Some(Anchor { start: None, end: Some(w.end()) });
                    literal.push((item, Side::End, Some(doc.slice(mm.start(), w.end()).to_string())));
                }
                PerturbationKind::Relabel(_) => unreachable!(),
            }
        }
        OutputPattern::StartEnd => {
            let sm = layout.start_match(item).ok_or_else(|| err("item not located"))?;
            let em = layout.end_match(item).ok_or_else(|| err("item not located"))?;
            match p.kind {
                PerturbationKind::ShortenLeft => {
                    let sw = layout.seq_words(sm);
                    let text = (sw.len() >= 2).then(|| doc.slice(sw[1].start(), sm.end()).to_string());
                    target[item] = Some(Anchor { start: Some(words[1].start()), end: Some(e) });
                    literal.push((item, Side::Start, text));
                }
                PerturbationKind::ShortenRight => {
                    let sw = layout.seq_words(em);
                    let text = (sw.len() >= 2).then(|| doc.slice(em.start(), sw[sw.len() - 2].end()).to_string());
                    target[item] = Some(Anchor { start: Some(s), end: Some(words[words.len() - 2].end()) });
                    literal.push((item, Side::End, text));
                }
                PerturbationKind::ExtendLeft => {
                    let w = word_before(doc, s).ok_or_else(|| err("no word before the segment"))?;
                    target[item] = Some(Anchor { start: Some(w.start()), end: Some(e) });
                    literal.push((item, Side::Start, Some(doc.slice(w.start(), sm.end()).to_string())));
                    if let Some(prev) = layout.prev_located(item) {
                        let a = target[prev].unwrap_or(Anchor { start: None, end: None });
                        let (ps, pe) = (a.start.unwrap_or(0), a.end.unwrap_or(0));
                        if pe > w.start() {
                            let kept = region_words(ps, w.start());
                            let last = kept.last().ok_or_else(|| err("would empty the previous segment"))?;
                            target[prev] = Some(Anchor { start: Some(ps), end: Some(last.end()) });
                            literal.push((prev, Side::End, None));
                        }
                    }
                }
                PerturbationKind::ExtendRight => {
                    let w = word_after(doc, e).ok_or_else(|| err("no word after the segment"))?;
                    target[item] = Some(Anchor { start: Some(s), end: Some(w.end()) });
                    literal.push((item, Side::End, Some(doc.slice(em.start(), w.end()).to_string())));
                    if let Some(next) = layout.next_located(item) {
                        let a = target[next].unwrap_or(Anchor { start: None, end: None });
                        let (ns, ne) = (a.start.unwrap_or(0), a.end.unwrap_or(0));
                        if ns < w.end() {
                            let kept = region_words(w.end(), ne);
                            let first = kept.first().ok_or_else(|| err("would empty the next segment"))?;
                            target[next] = Some(Anchor { start: Some(first.start()), end: Some(ne) });
                            literal.push((next, Side::Start, None));
                        }
                    }
                }
                PerturbationKind::Relabel(_) => unreachable!(),
            }
        }
    }
    Ok(Plan {
        target,
        literal,
        relabel: None,
    })
}

/// Text region a sequence of item `j` must lie in under `target`.
fn region(pattern: OutputPattern, doc: &Document, target: &[Option<Anchor>], j: usize) -> Option<(usize, usize)> {
    let a = target[j]?;
    match pattern {
        OutputPattern::Start => {
            let start = a.start?;
            let end = target[j + 1..]
                .iter()
                .flatten()
                .find_map(|t| t.start)
                .unwrap_or(doc.len());
            Some((start, end))
        }
        OutputPattern::End => {
            let end = a.end?;
            let start = target[..j]
                .iter()
                .rev()
                .flatten()
                .find_map(|t| t.end)
                .unwrap_or(0);
            Some((start, end))
        }
        OutputPattern::StartEnd => Some((a.start?, a.end?)),
    }
}

fn side_seq(item: &BoundaryItem, side: Side) -> Option<&str> {
    match side {
        Side::Start => item.start_seq.as_deref(),
        Side::End => item.end_seq.as_deref(),
    }
}

fn set_side(item: &mut BoundaryItem, side: Side, text: String) {
    match side {
        Side::Start => item.start_seq = Some(text),
        Side::End => item.end_seq = Some(text),
    }
}

fn sides(pattern: OutputPattern) -> &'static [Side] {
    match pattern {
        OutputPattern::Start => &[Side::Start],
        OutputPattern::End => &[Side::End],
        OutputPattern::StartEnd => &[Side::Start, Side::End],
    }
}

fn matches_target(pattern: OutputPattern, locs: &[Option<ItemLocation>], target: &[Option<Anchor>], upto: usize) -> bool {
    locs.iter()
        .zip(target)
        .take(upto)
        .all(|(l, t)| l.as_ref().map(|l| anchor_of(pattern, l)) == *t)
}

/// Whether a located sequence lies inside its item's region.
fn fits(loc: &ItemLocation, side: Side, reg: (usize, usize)) -> bool {
    let m = match side {
        Side::Start => loc.start_match,
        Side::End => loc.end_match,
    };
    m.is_some_and(|m| m.start() >= reg.0 && m.end() <= reg.1)
}

/// Applies the literal edits, then repairs touched sequences so that the
/// output locates exactly at `plan.target`.
fn realize(doc: &Document, out: &BoundaryOutput, plan: Plan) -> Result<BoundaryOutput, PerturbError> {
    let pattern = out.pattern();
    let target = plan.target;
    let mut items = out.items().to_vec();
    if let Some((j, label)) = plan.relabel {
        items[j].label = label;
        return BoundaryOutput::new(pattern, items).map_err(|e| err(e.to_string()));
    }

    let mut redo: BTreeSet<(usize, Side)> = BTreeSet::new();
    let mut touched: BTreeSet<usize> = BTreeSet::new();
    for (j, side, text) in plan.literal {
        touched.insert(j);
        match text {
            Some(t) if !t.trim().is_empty() => set_side(&mut items[j], side, t),
            _ => {
                redo.insert((j, side));
            }
        }
    }

    // items whose sequences might now overlap a moved boundary
    let located: Vec<usize> = (0..items.len()).filter(|&j| target[j].is_some()).collect();
    let mut check = touched.clone();
    for &j in &touched {
        let pos = located.iter().position(|&k| k == j);
        if let Some(pos) = pos {
            if pos > 0 {
                check.insert(located[pos - 1]);
            }
            if pos + 1 < located.len() {
                check.insert(located[pos + 1]);
            }
        }
    }

    let build = |items: &[BoundaryItem]| BoundaryOutput::new(pattern, items.to_vec()).ok();
    if redo.is_empty() {
        if let Some(cand) = build(&items) {
            let locs = locate_items(doc, &cand);
            for &j in &check {
                let Some(reg) = region(pattern, doc, &target, j) else { continue };
                for &side in sides(pattern) {
                    let ok = locs[j].is_some_and(|l| fits(&l, side, reg) && Some(anchor_of(pattern, &l)) == target[j]);
                    if !ok {
                        redo.insert((j, side));
                    }
                }
            }
            if redo.is_empty() {
                return if matches_target(pattern, &locs, &target, items.len()) {
                    Ok(cand)
                } else {
                    Err(err("edit relocates other sequences"))
                };
            }
        } else {
            redo.extend(touched.iter().flat_map(|&j| sides(pattern).iter().map(move |&s| (j, s))));
        }
    }

    for &(j, side) in &redo {
        let reg = region(pattern, doc, &target, j).ok_or_else(|| err("repair of an unlocated item"))?;
        let ws = doc.words_within(reg.0, reg.1);
        let mut fixed = false;
        for k in 1..=ws.len() {
            let text = match side {
                Side::Start => doc.slice(reg.0, ws[k - 1].end()),
                Side::End => doc.slice(ws[ws.len() - k].start(), reg.1),
            };
            if text.trim().is_empty() {
                continue;
            }
            set_side(&mut items[j], side, text.to_string());
            if side_locates(doc, pattern, &items, &target, j, side) {
                fixed = true;
                break;
            }
        }
        if !fixed {
            return Err(err(format!("cannot re-derive the sequence of item {j}")));
        }
    }

    let cand = build(&items).ok_or_else(|| err("repaired output is invalid"))?;
    let locs = locate_items(doc, &cand);
    if !matches_target(pattern, &locs, &target, items.len()) {
        return Err(err("edit cannot be realized by sequence changes"));
    }
    for &j in &check {
        if let (Some(reg), Some(l)) = (region(pattern, doc, &target, j), locs[j]) {
            if sides(pattern).iter().any(|&s| !fits(&l, s, reg)) {
                return Err(err("sequences still overlap after repair"));
            }
        }
    }
    Ok(cand)
}

/// Whether `side` of item `j` locates at its target given items before it.
fn side_locates(
    doc: &Document,
    pattern: OutputPattern,
    items: &[BoundaryItem],
    target: &[Option<Anchor>],
    j: usize,
    side: Side,
) -> bool {
    let Some(a) = target[j] else { return false };
    let Some(seq) = side_seq(&items[j], side) else { return false };
    match (pattern, side) {
        (OutputPattern::StartEnd, Side::Start) => {
            let cursor = target[..j].iter().rev().flatten().find_map(|t| t.end).unwrap_or(0);
            doc.find_from(seq, cursor).map(|m| m.start()) == a.start
        }
        (OutputPattern::StartEnd, Side::End) => {
            let Some(s) = a.start else { return false };
            doc.find_from(seq, s).map(|m| m.end()) == a.end
        }
        _ => {
            // location is prefix-consistent, so the prefix output suffices
            let Ok(prefix) = BoundaryOutput::new(pattern, items[..=j].to_vec()) else {
                return false;
            };
            let locs = locate_items(doc, &prefix);
            matches_target(pattern, &locs, target, j) && locs[j].map(|l| anchor_of(pattern, &l)) == Some(a)
        }
    }
}

fn candidate_kinds(labels: &LabelSet) -> Vec<PerturbationKind> {
    let mut kinds = vec![
        PerturbationKind::ShortenLeft,
        PerturbationKind::ShortenRight,
        PerturbationKind::ExtendLeft,
        PerturbationKind::ExtendRight,
    ];
    kinds.extend(labels.iter().map(|l| PerturbationKind::Relabel(l.to_string())));
    kinds
}

/// Applies `p` to a boundary output without scoring it.
pub fn perturb_output(
    doc: &Document,
    out: &BoundaryOutput,
    p: &Perturbation,
    labels: &LabelSet,
) -> Result<BoundaryOutput, PerturbError> {
    let layout = Layout::new(doc, out);
    let plan = plan(&layout, p, labels)?;
    realize(doc, out, plan)
}

/// All legal single perturbations of an output, in tie-breaking order.
pub fn enumerate_output_perturbations(doc: &Document, out: &BoundaryOutput, labels: &LabelSet) -> Vec<Perturbation> {
    enumerate_with_results(doc, out, labels).into_iter().map(|(p, _)| p).collect()
}

fn enumerate_with_results(doc: &Document, out: &BoundaryOutput, labels: &LabelSet) -> Vec<(Perturbation, BoundaryOutput)> {
    let layout = Layout::new(doc, out);
    let kinds = candidate_kinds(labels);
    let mut result = Vec::new();
    for i in 0..layout.recon.segments.len() {
        for kind in &kinds {
            let p = Perturbation::new(i, kind.clone());
            if let Ok(pl) = plan(&layout, &p, labels) {
                if let Ok(new) = realize(doc, out, pl) {
                    result.push((p, new));
                }
            }
        }
    }
    result
}

/// A uniformly chosen legal perturbation of `out` and its result, or `None`
/// if there is none. Cheaper than full enumeration: edits are tried in
/// random order until one is realizable.
pub fn sample_perturbation<R: Rng + ?Sized>(
    doc: &Document,
    out: &BoundaryOutput,
    labels: &LabelSet,
    rng: &mut R,
) -> Option<(Perturbation, BoundaryOutput)> {
    let layout = Layout::new(doc, out);
    let kinds = candidate_kinds(labels);
    let mut all: Vec<Perturbation> = (0..layout.recon.segments.len())
        .flat_map(|i| kinds.iter().map(move |k| Perturbation::new(i, k.clone())))
        .collect();
    all.shuffle(rng);
    all.into_iter().find_map(|p| {
        let pl = plan(&layout, &p, labels).ok()?;
        realize(doc, out, pl).ok().map(|new| (p, new))
    })
}

/// All legal single perturbations of a candidate. Placeholders have none.
pub fn enumerate_perturbations(doc: &Document, cand: &Candidate, labels: &LabelSet) -> Vec<Perturbation> {
    match &cand.output {
        Some(out) => enumerate_output_perturbations(doc, out, labels),
        None => Vec::new(),
    }
}

/// Applies a legal perturbation and re-scores the result.
pub fn apply_perturbation(
    doc: &Document,
    cand: &Candidate,
    p: &Perturbation,
    gold: &Segmentation,
    labels: &LabelSet,
) -> Result<Candidate, PerturbError> {
    let out = cand
        .output
        .as_ref()
        .ok_or_else(|| err("placeholder candidates cannot be perturbed"))?;
    let new = perturb_output(doc, out, p, labels)?;
    Ok(Candidate::score(doc, gold, new)?)
}

/// The chosen intermediate candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intermediate {
    pub candidate: Candidate,
    /// Reward of `candidate` minus reward of the original; may be `<= 0`.
    pub gain: f64,
    /// The applied edits, in order.
    pub steps: Vec<Perturbation>,
}

/// One evaluated pool entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolEntry {
    pub perturbation: Perturbation,
    pub candidate: Candidate,
}

/// Applies every legal single perturbation and scores the results.
pub fn evaluate_pool(
    doc: &Document,
    cand: &Candidate,
    gold: &Segmentation,
    labels: &LabelSet,
) -> Result<Vec<PoolEntry>, PerturbError> {
    let Some(out) = &cand.output else {
        return Ok(Vec::new());
    };
    enumerate_with_results(doc, out, labels)
        .into_par_iter()
        .map(|(perturbation, new)| {
            Ok(PoolEntry {
                perturbation,
                candidate: Candidate::score(doc, gold, new)?,
            })
        })
        .collect()
}

fn best_single(
    doc: &Document,
    cand: &Candidate,
    gold: &Segmentation,
    labels: &LabelSet,
) -> Result<Option<PoolEntry>, PerturbError> {
    let pool = evaluate_pool(doc, cand, gold, labels)?;
    // first maximum in (segment, kind) order wins ties
    let mut best: Option<PoolEntry> = None;
    for entry in pool {
        if best.as_ref().is_none_or(|b| entry.candidate.reward() > b.candidate.reward()) {
            best = Some(entry);
        }
    }
    Ok(best)
}

/// The highest-reward candidate reachable by one perturbation (`steps = 1`)
/// or by two greedy perturbations (`steps = 2`).
pub fn best_intermediate(
    doc: &Document,
    cand: &Candidate,
    gold: &Segmentation,
    labels: &LabelSet,
    steps: usize,
) -> Result<Intermediate, PerturbError> {
    if !(1..=2).contains(&steps) {
        return Err(PerturbError::InvalidSteps(steps));
    }
    let first = best_single(doc, cand, gold, labels)?.ok_or(PerturbError::NoPerturbations)?;
    let mut applied = vec![first.perturbation];
    let mut current = first.candidate;
    if steps == 2 {
        if let Some(second) = best_single(doc, &current, gold, labels)? {
            applied.push(second.perturbation);
            current = second.candidate;
        }
    }
    Ok(Intermediate {
        gain: current.reward() - cand.reward(),
        candidate: current,
        steps: applied,
    })
}
