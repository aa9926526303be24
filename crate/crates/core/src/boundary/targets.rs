//! Synthesis of boundary-output targets from annotated segmentations.

use rand::Rng;

use super::{locate_items, reconstruct_from_locations, BoundaryError, BoundaryItem, BoundaryOutput, OutputPattern};
use crate::segmentation::{validate_segmentation, Document, Segmentation, Span};

/// Upper bound of the uniformly sampled initial sequence length, in words.
pub const DEFAULT_MAX_SAMPLED_WORDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetOptions {
    /// Initial lengths are drawn uniformly from `[1, min(max_sampled_words, words)]`.
    pub max_sampled_words: usize,
}

impl Default for TargetOptions {
    fn default() -> Self {
        Self {
            max_sampled_words: DEFAULT_MAX_SAMPLED_WORDS,
        }
    }
}

/// Builds the boundary output a perfect model would emit for `gold`.
///
/// Each sequence starts at a randomly sampled word length and is extended
/// one word at a time until all sequences are pairwise distinct and
/// reconstruction reproduces `gold` exactly.
pub fn make_targets<R: Rng + ?Sized>(
    doc: &Document,
    gold: &Segmentation,
    pattern: OutputPattern,
    rng: &mut R,
) -> Result<BoundaryOutput, BoundaryError> {
    make_targets_with(doc, gold, pattern, TargetOptions::default(), rng)
}

pub fn make_targets_with<R: Rng + ?Sized>(
    doc: &Document,
    gold: &Segmentation,
    pattern: OutputPattern,
    opts: TargetOptions,
    rng: &mut R,
) -> Result<BoundaryOutput, BoundaryError> {
    let seg_words = checked_segment_words(doc, gold)?;

    let cap = opts.max_sampled_words.max(1);
    let mut sample = |n: usize| rng.random_range(1..=n.min(cap));
    let mut start_k: Vec<usize> = Vec::new();
    let mut end_k: Vec<usize> = Vec::new();
    for words in &seg_words {
        if pattern.has_start() {
            start_k.push(sample(words.len()));
        }
        if pattern.has_end() {
            end_k.push(sample(words.len()));
        }
    }
    extend_targets(doc, gold, pattern, &seg_words, start_k, end_k)
}

/// Deterministic part of [`make_targets`]: starts from the given initial
/// word lengths (one per segment for each sequence kind the pattern uses;
/// values are clamped to `[1, segment words]`) and extends as needed.
pub fn targets_from_lengths(
    doc: &Document,
    gold: &Segmentation,
    pattern: OutputPattern,
    start_lengths: &[usize],
    end_lengths: &[usize],
) -> Result<BoundaryOutput, BoundaryError> {
    let seg_words = checked_segment_words(doc, gold)?;
    let n = seg_words.len();
    let clamp = |ks: &[usize], used: bool| -> Result<Vec<usize>, BoundaryError> {
        if !used {
            return Ok(Vec::new());
        }
        if ks.len() != n {
            return Err(BoundaryError::TargetSynthesisFailure {
                segment: 0,
                reason: format!("expected {n} initial lengths, got {}", ks.len()),
            });
        }
        Ok(ks
            .iter()
            .zip(&seg_words)
            .map(|(&k, w)| k.clamp(1, w.len()))
            .collect())
    };
    let start_k = clamp(start_lengths, pattern.has_start())?;
    let end_k = clamp(end_lengths, pattern.has_end())?;
    extend_targets(doc, gold, pattern, &seg_words, start_k, end_k)
}

fn checked_segment_words(doc: &Document, gold: &Segmentation) -> Result<Vec<Vec<Span>>, BoundaryError> {
    let report = validate_segmentation(doc, gold);
    if !report.ok() || !report.lossless {
        let why = report
            .violations
            .first()
            .map(|v| v.to_string())
            .unwrap_or_else(|| "segments do not tile the document".to_string());
        return Err(BoundaryError::InvalidGold(why));
    }
    let seg_words: Vec<Vec<Span>> = gold
        .segments()
        .iter()
        .map(|s| doc.words_within(s.span.start(), s.span.end()))
        .collect();
    if let Some(i) = seg_words.iter().position(Vec::is_empty) {
        return Err(BoundaryError::TargetSynthesisFailure {
            segment: i,
            reason: "segment contains no words".into(),
        });
    }
    Ok(seg_words)
}

fn extend_targets(
    doc: &Document,
    gold: &Segmentation,
    pattern: OutputPattern,
    seg_words: &[Vec<Span>],
    mut start_k: Vec<usize>,
    mut end_k: Vec<usize>,
) -> Result<BoundaryOutput, BoundaryError> {
    let segs = gold.segments();
    let start_text = |i: usize, k: usize| doc.slice(segs[i].span.start(), seg_words[i][k - 1].end());
    let end_text = |i: usize, k: usize| {
        let words = &seg_words[i];
        doc.slice(words[words.len() - k].start(), segs[i].span.end())
    };
    let fail = |segment: usize, reason: &str| BoundaryError::TargetSynthesisFailure {
        segment,
        reason: reason.to_string(),
    };

    loop {
        // pairwise distinctness, per sequence kind
        let mut extended = false;
        for (ks, is_start) in [(&mut start_k, true), (&mut end_k, false)] {
            if ks.is_empty() {
                continue;
            }
            let texts: Vec<&str> = ks
                .iter()
                .enumerate()
                .map(|(i, &k)| if is_start { start_text(i, k) } else { end_text(i, k) }.trim())
                .collect();
            let mut bump = vec![false; texts.len()];
            for i in 0..texts.len() {
                for j in (i + 1)..texts.len() {
                    if texts[i] == texts[j] {
                        bump[i] = true;
                        bump[j] = true;
                    }
                }
            }
            let mut group_blocked = None;
            for i in 0..texts.len() {
                if !bump[i] {
                    continue;
                }
                if ks[i] < seg_words[i].len() {
                    ks[i] += 1;
                    extended = true;
                } else if group_blocked.is_none() {
                    group_blocked = Some(i);
                }
            }
            if !extended {
                if let Some(i) = group_blocked {
                    return Err(fail(i, "sequence cannot be made unique"));
                }
            }
        }
        if extended {
            continue;
        }

        let items: Vec<BoundaryItem> = (0..segs.len())
            .map(|i| {
                let label = segs[i].label.clone();
                match pattern {
                    OutputPattern::Start => BoundaryItem::start(label, start_text(i, start_k[i])),
                    OutputPattern::End => BoundaryItem::end(label, end_text(i, end_k[i])),
                    OutputPattern::StartEnd => BoundaryItem::start_end(
                        label,
                        start_text(i, start_k[i]),
                        end_text(i, end_k[i]),
                    ),
                }
            })
            .collect();
        let out = BoundaryOutput::new(pattern, items)
            .map_err(|e| fail(0, &format!("invalid output: {e}")))?;

        let locs = locate_items(doc, &out);
        let mut wrong = None;
        for (i, loc) in locs.iter().enumerate() {
            let span = segs[i].span;
            let start_ok = !pattern.has_start()
                || loc.and_then(|l| l.start_match).map(|m| m.start()) == Some(span.start());
            let end_ok = !pattern.has_end()
                || loc.and_then(|l| l.end_match).map(|m| m.end()) == Some(span.end());
            if !(start_ok && end_ok) {
                wrong = Some((i, start_ok));
                break;
            }
        }
        match wrong {
            None => {
                let recon = reconstruct_from_locations(doc, &out, &locs);
                if recon.segments == *gold && recon.discarded.is_empty() {
                    return Ok(out);
                }
                return Err(fail(0, "reconstruction does not reproduce the gold segmentation"));
            }
            Some((i, start_ok)) => {
                let ks = if !start_ok { &mut start_k } else { &mut end_k };
                if ks[i] >= seg_words[i].len() {
                    return Err(fail(i, "sequence cannot be located unambiguously"));
                }
                ks[i] += 1;
            }
        }
    }
}
