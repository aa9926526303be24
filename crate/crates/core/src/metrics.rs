//! Scoring of predicted segmentations against a lossless gold annotation.
//!
//! Predicted segments are expected in document order and pairwise disjoint,
//! as produced by reconstruction; they may leave gaps. Characters outside
//! every predicted segment carry a reserved "no label" class for the
//! character F1, and each maximal uncovered run acts as its own segment for
//! P_k.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::boundary::ReconstructionResult;
use crate::segmentation::{Document, Segment, Segmentation};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("gold segmentation does not tile the document")]
    GoldNotLossless,
    #[error("P_k window {window} must be smaller than the document length {len}")]
    WindowTooLarge { window: usize, len: usize },
}

/// Reward components and the combined reward
/// `rho_rec * (em_f1 + char_f1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub rho_rec: f64,
    pub em_f1: f64,
    pub char_f1: f64,
    pub reward: f64,
}

impl RewardBreakdown {
    pub fn zero() -> Self {
        Self {
            rho_rec: 0.0,
            em_f1: 0.0,
            char_f1: 0.0,
            reward: 0.0,
        }
    }

    pub fn from_components(rho_rec: f64, em_f1: f64, char_f1: f64) -> Self {
        Self {
            rho_rec,
            em_f1,
            char_f1,
            reward: rho_rec * (em_f1 + char_f1) / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactMatch {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Predicted segments with at least one exact gold counterpart.
    pub matched_pred: usize,
    /// Gold segments with at least one exact predicted counterpart.
    pub matched_gold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EvalCounts {
    pub predicted: usize,
    pub gold: usize,
    pub exact_matched: usize,
    pub discarded: usize,
}

/// Full per-document metric suite. All scores are fractions in `[0, 1]`;
/// lower `pk` is better, higher is better for everything else.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub rho_rec: f64,
    pub em_f1: f64,
    pub pk: f64,
    pub f1_lab: f64,
    pub char_f1: f64,
    pub counts: EvalCounts,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ensure_lossless(doc: &Document, gold: &[Segment]) -> Result<(), MetricError> {
    let mut cursor = 0;
    for seg in gold {
        if seg.span.start() != cursor {
            return Err(MetricError::GoldNotLossless);
        }
        cursor = seg.span.end();
    }
    if cursor != doc.len() || gold.is_empty() {
        return Err(MetricError::GoldNotLossless);
    }
    Ok(())
}

/// Fraction of document characters covered by the predicted segments.
pub fn reconstruction_ratio(doc: &Document, pred: &[Segment]) -> f64 {
    let covered: usize = pred.iter().map(|s| s.span.len()).sum();
    (covered as f64 / doc.len() as f64).min(1.0)
}

/// Exact-match F1: a predicted segment matches a gold one iff labels and
/// texts are equal. Matching is by text content, not by offsets.
pub fn exact_match_f1(doc: &Document, pred: &[Segment], gold: &[Segment]) -> ExactMatch {
    fn key<'a>(doc: &'a Document, s: &'a Segment) -> (&'a str, &'a str) {
        (s.label.as_str(), doc.slice(s.span.start(), s.span.end()))
    }
    let gold_keys: HashSet<(&str, &str)> = gold.iter().map(|s| key(doc, s)).collect();
    let pred_keys: HashSet<(&str, &str)> = pred.iter().map(|s| key(doc, s)).collect();
    let matched_pred = pred.iter().filter(|s| gold_keys.contains(&key(doc, s))).count();
    let matched_gold = gold.iter().filter(|s| pred_keys.contains(&key(doc, s))).count();
    let precision = if pred.is_empty() {
        0.0
    } else {
        matched_pred as f64 / pred.len() as f64
    };
    let recall = if gold.is_empty() {
        0.0
    } else {
        matched_gold as f64 / gold.len() as f64
    };
    ExactMatch {
        precision,
        recall,
        f1: harmonic(precision, recall),
        matched_pred,
        matched_gold,
    }
}

/// Gold-support-weighted character-level F1.
///
/// Computed from span overlaps, never materializing per-character labels.
pub fn char_f1(doc: &Document, pred: &[Segment], gold: &[Segment]) -> Result<f64, MetricError> {
    ensure_lossless(doc, gold)?;

    let mut index: HashMap<&str, usize> = HashMap::new();
    for s in gold.iter().chain(pred) {
        let next = index.len();
        index.entry(s.label.as_str()).or_insert(next);
    }
    let n_labels = index.len();
    let none = n_labels; // reserved class for uncovered characters
    let width = n_labels + 1;
    // confusion[gold * width + pred]
    let mut confusion = vec![0usize; n_labels * width];

    let mut j = 0;
    for g in gold {
        let gi = index[g.label.as_str()];
        let mut covered = 0;
        while j < pred.len() && pred[j].span.end() <= g.span.start() {
            j += 1;
        }
        let mut k = j;
        while k < pred.len() && pred[k].span.start() < g.span.end() {
            let ov = pred[k].span.overlap(&g.span);
            confusion[gi * width + index[pred[k].label.as_str()]] += ov;
            covered += ov;
            k += 1;
        }
        confusion[gi * width + none] += g.span.len() - covered;
    }

    let mut weighted = 0.0;
    for l in 0..n_labels {
        let support: usize = (0..width).map(|p| confusion[l * width + p]).sum();
        if support == 0 {
            continue;
        }
        let predicted: usize = (0..n_labels).map(|g| confusion[g * width + l]).sum();
        let tp = confusion[l * width + l];
        let f1 = 2.0 * tp as f64 / (support + predicted) as f64;
        weighted += support as f64 * f1;
    }
    Ok(weighted / doc.len() as f64)
}

/// Default P_k window: half the mean gold segment length, rounded, at least 1.
pub fn default_pk_window(doc_len: usize, n_gold: usize) -> usize {
    if n_gold == 0 {
        return 1;
    }
    ((0.5 * doc_len as f64 / n_gold as f64).round() as usize).max(1)
}

/// Character-level P_k: the fraction of probes `(i, i + window)` on which
/// prediction and gold disagree about the two characters sharing a segment.
pub fn pk(
    doc: &Document,
    pred: &[Segment],
    gold: &[Segment],
    window: Option<usize>,
) -> Result<f64, MetricError> {
    ensure_lossless(doc, gold)?;
    let n = doc.len();
    let window = window.unwrap_or_else(|| default_pk_window(n, gold.len()));
    if window >= n || window == 0 {
        return Err(MetricError::WindowTooLarge { window, len: n });
    }

    // boundary[x] = 1 iff character x opens a new segment (x > 0)
    let mut gold_b = vec![0u32; n + 1];
    for s in gold.iter().skip(1) {
        gold_b[s.span.start()] = 1;
    }
    let mut pred_b = vec![0u32; n + 1];
    for s in pred {
        // both edges matter: gaps are filler segments
        for x in [s.span.start(), s.span.end()] {
            if x > 0 && x < n {
                pred_b[x] = 1;
            }
        }
    }
    let prefix = |b: &[u32]| {
        let mut acc = 0u32;
        b.iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect::<Vec<u32>>()
    };
    let gp = prefix(&gold_b);
    let pp = prefix(&pred_b);
    let probes = n - window;
    let disagreements = (0..probes)
        .filter(|&i| {
            let gold_same = gp[i + window] == gp[i];
            let pred_same = pp[i + window] == pp[i];
            gold_same != pred_same
        })
        .count();
    Ok(disagreements as f64 / probes as f64)
}

/// Label micro-F1: each predicted segment is paired with the gold segment of
/// maximal overlap (ties go to the earliest); with one pairing per predicted
/// segment this equals pairing accuracy.
pub fn f1_label(pred: &[Segment], gold: &[Segment]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let mut correct = 0usize;
    for p in pred {
        let first = gold.partition_point(|g| g.span.end() <= p.span.start());
        let mut best: Option<(usize, &Segment)> = None;
        for g in gold[first..].iter().take_while(|g| g.span.start() < p.span.end()) {
            let ov = g.span.overlap(&p.span);
            if best.is_none_or(|(b, _)| ov > b) {
                best = Some((ov, g));
            }
        }
        if let Some((ov, g)) = best {
            if ov > 0 && g.label == p.label {
                correct += 1;
            }
        }
    }
    correct as f64 / pred.len() as f64
}

/// The verifiable reward for a predicted segmentation.
pub fn reward(doc: &Document, pred: &[Segment], gold: &[Segment]) -> Result<RewardBreakdown, MetricError> {
    let char_f1 = char_f1(doc, pred, gold)?;
    let rho = reconstruction_ratio(doc, pred);
    let em = exact_match_f1(doc, pred, gold).f1;
    Ok(RewardBreakdown::from_components(rho, em, char_f1))
}

/// Computes the full metric suite for one reconstructed prediction.
pub fn evaluate(
    doc: &Document,
    pred: &ReconstructionResult,
    gold: &Segmentation,
    window: Option<usize>,
) -> Result<EvalReport, MetricError> {
    let p = pred.segments();
    let g = gold.segments();
    let em = exact_match_f1(doc, p, g);
    Ok(EvalReport {
        rho_rec: reconstruction_ratio(doc, p),
        em_f1: em.f1,
        pk: pk(doc, p, g, window)?,
        f1_lab: f1_label(p, g),
        char_f1: char_f1(doc, p, g)?,
        counts: EvalCounts {
            predicted: p.len(),
            gold: g.len(),
            exact_matched: em.matched_pred,
            discarded: pred.discarded.len(),
        },
    })
}
