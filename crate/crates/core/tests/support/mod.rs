//! Random instance generators and brute-force oracles shared by the
//! integration tests. Oracles work character by character or in span space
//! and never call the library code they check.

#![allow(dead_code, clippy::needless_range_loop)]

use boundseg::boundary::OutputPattern;
use boundseg::metrics;
use boundseg::{Document, LabelSet, Segment, Segmentation, Span};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

pub const VOCAB: &[&str] = &["the", "a", "input", "output", "x", "{q}", "é", "```", "key:", "1."];
pub const SEPARATORS: &[&str] = &[" ", " ", " ", "\n", "  ", "\n\n"];

pub fn seg(label: &str, s: usize, e: usize) -> Segment {
    Segment::new(label, Span::new(s, e).unwrap())
}

/// A document of `n_words` words. With `distinct`, every word is unique.
pub fn random_doc<R: Rng>(rng: &mut R, id: &str, n_words: usize, distinct: bool) -> Document {
    let mut text = String::new();
    for i in 0..n_words {
        if i > 0 {
            text.push_str(SEPARATORS.choose(rng).unwrap());
        }
        if distinct {
            text.push_str(&format!("w{i}"));
        } else {
            text.push_str(VOCAB.choose(rng).unwrap());
        }
    }
    Document::new(id, text).unwrap()
}

/// Random labels with adjacent labels distinct.
pub fn alternating_labels<R: Rng>(rng: &mut R, labels: &LabelSet, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let l = labels.names().choose(rng).unwrap().clone();
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// A lossless segmentation whose boundaries sit at word starts.
pub fn word_aligned_segmentation<R: Rng>(
    rng: &mut R,
    doc: &Document,
    n_segments: usize,
    labels: &LabelSet,
) -> Segmentation {
    let words = doc.words();
    let n = n_segments.clamp(1, words.len());
    let mut cuts: Vec<usize> = (1..words.len()).collect();
    cuts.shuffle(rng);
    cuts.truncate(n - 1);
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts.iter().map(|&w| words[w].start()));
    bounds.push(doc.len());
    let names = alternating_labels(rng, labels, n);
    bounds
        .windows(2)
        .zip(names)
        .map(|(b, l)| seg(&l, b[0], b[1]))
        .collect::<Vec<_>>()
        .into()
}

/// A lossless segmentation with arbitrary character cut points.
pub fn char_segmentation<R: Rng>(rng: &mut R, len: usize, max_segments: usize, labels: &LabelSet) -> Segmentation {
    let n = rng.random_range(1..=max_segments.min(len));
    let mut cuts: Vec<usize> = (1..len).collect();
    cuts.shuffle(rng);
    cuts.truncate(n - 1);
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(len);
    let names = alternating_labels(rng, labels, n);
    bounds
        .windows(2)
        .zip(names)
        .map(|(b, l)| seg(&l, b[0], b[1]))
        .collect::<Vec<_>>()
        .into()
}

/// A prediction: a lossless segmentation with some segments dropped or
/// trimmed, leaving gaps.
pub fn gappy_prediction<R: Rng>(rng: &mut R, len: usize, max_segments: usize, labels: &LabelSet) -> Vec<Segment> {
    let base = char_segmentation(rng, len, max_segments, labels);
    let mut out = Vec::new();
    for s in base.iter() {
        if rng.random_bool(0.15) {
            continue;
        }
        let (mut a, mut b) = (s.span.start(), s.span.end());
        if b - a > 2 && rng.random_bool(0.2) {
            a += rng.random_range(0..(b - a) / 2);
        }
        if b - a > 2 && rng.random_bool(0.2) {
            b -= rng.random_range(0..(b - a) / 2);
        }
        // labels of a prediction may repeat across neighbors
        let label = if rng.random_bool(0.1) {
            labels.names().choose(rng).unwrap().clone()
        } else {
            s.label.clone()
        };
        out.push(seg(&label, a, b));
    }
    out
}

fn chars(doc: &Document) -> Vec<char> {
    doc.text().chars().collect()
}

fn text_of(doc: &Document, s: &Segment) -> String {
    chars(doc)[s.span.start()..s.span.end()].iter().collect()
}

pub fn oracle_rho(doc: &Document, pred: &[Segment]) -> f64 {
    let mut covered = vec![false; doc.len()];
    for s in pred {
        for c in s.span.start()..s.span.end() {
            covered[c] = true;
        }
    }
    covered.iter().filter(|&&c| c).count() as f64 / doc.len() as f64
}

pub fn oracle_em_f1(doc: &Document, pred: &[Segment], gold: &[Segment]) -> f64 {
    let same = |a: &Segment, b: &Segment| a.label == b.label && text_of(doc, a) == text_of(doc, b);
    let mp = pred.iter().filter(|p| gold.iter().any(|g| same(p, g))).count();
    let mg = gold.iter().filter(|g| pred.iter().any(|p| same(p, g))).count();
    let p = if pred.is_empty() { 0.0 } else { mp as f64 / pred.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { mg as f64 / gold.len() as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn char_labels(len: usize, segs: &[Segment]) -> Vec<Option<String>> {
    let mut out = vec![None; len];
    for s in segs {
        for c in s.span.start()..s.span.end() {
            out[c] = Some(s.label.clone());
        }
    }
    out
}

pub fn oracle_char_f1(doc: &Document, pred: &[Segment], gold: &[Segment]) -> f64 {
    let n = doc.len();
    let g = char_labels(n, gold);
    let p = char_labels(n, pred);
    let mut labels: Vec<String> = gold.iter().map(|s| s.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let mut total = 0.0;
    for l in &labels {
        let support = g.iter().filter(|x| x.as_deref() == Some(l)).count();
        let predicted = p.iter().filter(|x| x.as_deref() == Some(l)).count();
        let tp = (0..n)
            .filter(|&c| g[c].as_deref() == Some(l) && p[c].as_deref() == Some(l))
            .count();
        if support + predicted > 0 {
            total += support as f64 * (2.0 * tp as f64 / (support + predicted) as f64);
        }
    }
    total / n as f64
}

/// Segment id per character; maximal uncovered runs get their own ids.
fn char_ids(len: usize, segs: &[Segment]) -> Vec<usize> {
    let mut ids = vec![usize::MAX; len];
    for (i, s) in segs.iter().enumerate() {
        for c in s.span.start()..s.span.end() {
            ids[c] = i;
        }
    }
    let mut gap = segs.len();
    for c in 0..len {
        if ids[c] == usize::MAX {
            if c == 0 || ids[c - 1] < segs.len() {
                gap += 1;
            }
            ids[c] = gap;
        }
    }
    ids
}

pub fn oracle_pk(doc: &Document, pred: &[Segment], gold: &[Segment], k: usize) -> f64 {
    let n = doc.len();
    let g = char_ids(n, gold);
    let p = char_ids(n, pred);
    let probes = n - k;
    let bad = (0..probes).filter(|&i| (g[i] == g[i + k]) != (p[i] == p[i + k])).count();
    bad as f64 / probes as f64
}

pub fn oracle_f1_label(pred: &[Segment], gold: &[Segment]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let mut correct = 0;
    for p in pred {
        let mut best: Option<(usize, &Segment)> = None;
        for g in gold {
            let ov = (p.span.start()..p.span.end())
                .filter(|c| (g.span.start()..g.span.end()).contains(c))
                .count();
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

/// Words of `doc` inside `[a, b)`, from the raw text.
fn words_in(doc: &Document, a: usize, b: usize) -> Vec<(usize, usize)> {
    let cs = chars(doc);
    let mut out = Vec::new();
    let mut c = a;
    while c < b {
        if cs[c].is_whitespace() {
            c += 1;
            continue;
        }
        let s = c;
        while c < b && !cs[c].is_whitespace() {
            c += 1;
        }
        out.push((s, c));
    }
    out
}

/// `(segment index, edit kind, new label)`.
pub type EditKey = (usize, &'static str, Option<String>);

/// Span-space enumeration of every legal single edit of a lossless,
/// word-aligned prediction under the `Start` or `End` pattern. Returns the
/// edits in tie-breaking order with the segmentation each one produces.
pub fn oracle_edits(
    doc: &Document,
    pred: &[Segment],
    labels: &LabelSet,
    pattern: OutputPattern,
) -> Vec<(EditKey, Vec<Segment>)> {
    let n = pred.len();
    let w = |i: usize| words_in(doc, pred[i].span.start(), pred[i].span.end());
    let set_boundary = |i: usize, b: usize| {
        // boundary between segments i and i + 1
        let mut out = pred.to_vec();
        out[i] = seg(&pred[i].label, pred[i].span.start(), b);
        out[i + 1] = seg(&pred[i + 1].label, b, pred[i + 1].span.end());
        out
    };
    let mut result = Vec::new();
    for i in 0..n {
        let wi = w(i);
        let mut push = |kind: &'static str, segs: Option<Vec<Segment>>| {
            if let Some(s) = segs {
                result.push(((i, kind, None), s));
            }
        };
        match pattern {
            OutputPattern::Start => {
                push(
                    "shorten_left",
                    (wi.len() >= 2).then(|| {
                        if i == 0 {
                            let mut out = pred.to_vec();
                            out[0] = seg(&pred[0].label, wi[1].0, pred[0].span.end());
                            out
                        } else {
                            set_boundary(i - 1, wi[1].0)
                        }
                    }),
                );
                push(
                    "shorten_right",
                    (i + 1 < n && wi.len() >= 2).then(|| set_boundary(i, wi[wi.len() - 1].0)),
                );
                push(
                    "extend_left",
                    (i > 0 && w(i - 1).len() >= 2).then(|| set_boundary(i - 1, w(i - 1).last().unwrap().0)),
                );
                push(
                    "extend_right",
                    (i + 1 < n && w(i + 1).len() >= 2).then(|| set_boundary(i, w(i + 1)[1].0)),
                );
            }
            OutputPattern::End => {
                push(
                    "shorten_left",
                    (i > 0 && wi.len() >= 2).then(|| set_boundary(i - 1, wi[0].1)),
                );
                push(
                    "shorten_right",
                    (wi.len() >= 2).then(|| {
                        let b = wi[wi.len() - 2].1;
                        if i + 1 < n {
                            set_boundary(i, b)
                        } else {
                            let mut out = pred.to_vec();
                            out[i] = seg(&pred[i].label, pred[i].span.start(), b);
                            out
                        }
                    }),
                );
                push(
                    "extend_left",
                    (i > 0 && w(i - 1).len() >= 2).then(|| {
                        let pw = w(i - 1);
                        set_boundary(i - 1, pw[pw.len() - 2].1)
                    }),
                );
                push(
                    "extend_right",
                    (i + 1 < n && w(i + 1).len() >= 2).then(|| set_boundary(i, w(i + 1)[0].1)),
                );
            }
            OutputPattern::StartEnd => unimplemented!("span oracle covers Start and End"),
        }
        for l in labels.iter() {
            let taken = [Some(&pred[i]), i.checked_sub(1).map(|j| &pred[j]), pred.get(i + 1)];
            if taken.iter().flatten().any(|s| s.label == l) {
                continue;
            }
            let mut out = pred.to_vec();
            out[i] = seg(l, pred[i].span.start(), pred[i].span.end());
            result.push(((i, "relabel", Some(l.to_string())), out));
        }
    }
    result
}

/// Best reward over the oracle pool (first maximum wins).
pub fn oracle_best_reward(doc: &Document, pred: &[Segment], gold: &[Segment], labels: &LabelSet, pattern: OutputPattern) -> Option<f64> {
    oracle_edits(doc, pred, labels, pattern)
        .into_iter()
        .map(|(_, segs)| metrics::reward(doc, &segs, gold).unwrap().reward)
        .fold(None, |best, r| Some(best.map_or(r, |b: f64| b.max(r))))
}
