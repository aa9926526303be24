//! Synthetic structured-prompt corpus.
//!
//! Each document is a sequence of segments separated by blank lines. A
//! segment is one structural element: a placeholder line (`Input: {text}`),
//! a fenced code block, a nested key-value block, or prose. The blank-line
//! separator belongs to the preceding segment, so every segment starts with
//! a non-whitespace character. Placeholders are their own gold segments.

use boundseg::{LabelSet, Segment, Segmentation, Span};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("infeasible corpus spec: {0}")]
    SpecInfeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_docs: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub min_segments: usize,
    pub max_segments: usize,
    pub labels: Vec<String>,
    pub placeholder_weight: f64,
    pub code_weight: f64,
    pub kv_weight: f64,
    pub prose_weight: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_docs: 100,
            min_words: 40,
            max_words: 200,
            min_segments: 2,
            max_segments: 6,
            labels: LabelSet::default().names().to_vec(),
            placeholder_weight: 1.0,
            code_weight: 1.0,
            kv_weight: 1.0,
            prose_weight: 3.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Element {
    Placeholder,
    Code,
    KeyValue,
    Prose,
}

const ELEMENTS: [Element; 4] = [Element::Placeholder, Element::Code, Element::KeyValue, Element::Prose];

impl CorpusSpec {
    fn weights(&self) -> [f64; 4] {
        [self.placeholder_weight, self.code_weight, self.kv_weight, self.prose_weight]
    }

    pub fn label_set(&self) -> Result<LabelSet, CorpusError> {
        LabelSet::new(self.labels.iter().cloned()).map_err(|e| CorpusError::SpecInfeasible(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::SpecInfeasible(m.to_string()));
        if self.min_segments < 1 {
            return bad("min_segments must be at least 1");
        }
        if self.min_segments > self.max_segments {
            return bad("segment-count range is empty");
        }
        if self.min_words < 1 || self.min_words > self.max_words {
            return bad("word-count range is empty");
        }
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return bad("element weights must be finite and non-negative");
        }
        if w.iter().all(|x| *x == 0.0) {
            return bad("element weights are all zero");
        }
        self.label_set()?;
        Ok(())
    }
}

const PROSE: &[&str] = &[
    "the", "model", "should", "read", "each", "input", "carefully", "and", "return", "a", "short",
    "answer", "that", "follows", "given", "format", "rules", "below", "when", "text", "contains",
    "several", "items", "list", "them", "in", "order", "of", "appearance", "do", "not", "add",
    "extra", "commentary", "keep", "tone", "neutral", "use", "only", "information", "provided",
    "by", "user", "summarize", "main", "points", "classify", "sentiment", "as", "positive",
    "negative", "or", "mixed", "explain", "your", "reasoning", "briefly", "before", "final",
    "result", "consider", "edge", "cases", "such", "empty", "fields", "missing", "values",
    "ambiguous", "labels", "examples", "show", "expected", "behavior", "for", "typical",
    "requests", "always", "respond", "with", "valid", "json", "output", "must", "match", "schema",
];

const CODE: &[&str] = &[
    "let", "x", "=", "parse(input)", "if", "len(items)", ">", "0:", "return", "result",
    "for", "item", "in", "items:", "total", "+=", "item.value", "print(total)", "def",
    "process(data):", "data.strip()", "else:", "None", "while", "queue:", "node", "queue.pop()",
];

const KEYS: &[&str] = &[
    "name", "type", "format", "fields", "options", "schema", "items", "value", "required",
    "default", "limit", "mode", "source", "target", "rules", "meta",
];

const PLACEHOLDERS: &[&str] = &[
    "input", "question", "document", "context", "query", "passage", "answer", "text", "table",
    "history", "user_message", "examples",
];

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

fn prose(rng: &mut ChaCha8Rng, budget: usize) -> String {
    let mut out = String::new();
    let mut written = 0;
    while written < budget {
        let len = rng.random_range(5..14).min(budget - written).max(1);
        let words: Vec<&str> = (0..len).map(|_| *PROSE.choose(rng).unwrap()).collect();
        let mut sentence = words.join(" ");
        if let Some(first) = sentence.get(..1) {
            sentence.replace_range(..1, &first.to_uppercase());
        }
        sentence.push('.');
        if !out.is_empty() {
            out.push(if rng.random_bool(0.2) { '\n' } else { ' ' });
        }
        out.push_str(&sentence);
        written += len;
    }
    out
}

fn code(rng: &mut ChaCha8Rng, budget: usize) -> String {
    let lang = *["python", "rust", "js", ""].choose(rng).unwrap();
    let mut out = format!("```{lang}\n");
    let mut written = 1;
    while written < budget.max(3) - 1 {
        let indent = "    ".repeat(rng.random_range(0..3));
        let len = rng.random_range(2..7);
        let toks: Vec<&str> = (0..len).map(|_| *CODE.choose(rng).unwrap()).collect();
        out.push_str(&indent);
        out.push_str(&toks.join(" "));
        out.push('\n');
        written += len;
    }
    out.push_str("```");
    out
}

fn key_value(rng: &mut ChaCha8Rng, budget: usize, depth: usize) -> String {
    let pad = "  ".repeat(depth + 1);
    let mut lines = Vec::new();
    let mut written = 1;
    while written < budget.max(2) {
        let key = KEYS.choose(rng).unwrap();
        if depth < 2 && budget - written > 6 && rng.random_bool(0.3) {
            let inner_budget = rng.random_range(3..(budget - written).min(12) + 1);
            lines.push(format!("{pad}\"{key}\": {}", key_value(rng, inner_budget, depth + 1)));
            written += inner_budget + 1;
        } else {
            let n = rng.random_range(1..4);
            let words: Vec<&str> = (0..n).map(|_| *PROSE.choose(rng).unwrap()).collect();
            lines.push(format!("{pad}\"{key}\": \"{}\"", words.join(" ")));
            written += n + 1;
        }
    }
    format!("{{\n{}\n{}}}", lines.join(",\n"), "  ".repeat(depth))
}

fn placeholder(rng: &mut ChaCha8Rng) -> String {
    let name = PLACEHOLDERS.choose(rng).unwrap();
    let mut title = name.replace('_', " ");
    title.replace_range(..1, &title[..1].to_uppercase());
    match rng.random_range(0..3) {
        0 => format!("{title}: {{{name}}}"),
        1 => format!("{{{{{name}}}}}"),
        _ => format!("[{}]", name.to_uppercase()),
    }
}

fn element_text(rng: &mut ChaCha8Rng, element: Element, budget: usize) -> String {
    match element {
        Element::Placeholder => placeholder(rng),
        Element::Code => code(rng, budget),
        Element::KeyValue => key_value(rng, budget, 0),
        Element::Prose => prose(rng, budget),
    }
}

fn pick_element(rng: &mut ChaCha8Rng, weights: &[f64; 4]) -> Element {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random_range(0.0..total);
    for (e, w) in ELEMENTS.iter().zip(weights) {
        if x < *w {
            return *e;
        }
        x -= w;
    }
    Element::Prose
}

fn generate_doc(spec: &CorpusSpec, labels: &LabelSet, index: usize) -> DatasetRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let weights = spec.weights();
    let n_segments = rng.random_range(spec.min_segments..=spec.max_segments);
    let words = rng.random_range(spec.min_words..=spec.max_words);

    // every element with positive weight appears when there is room
    let mut elements: Vec<Element> = ELEMENTS
        .iter()
        .zip(&weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(e, _)| *e)
        .collect();
    elements.shuffle(&mut rng);
    elements.truncate(n_segments);
    while elements.len() < n_segments {
        elements.push(pick_element(&mut rng, &weights));
    }
    elements.shuffle(&mut rng);

    let n_fixed = elements.iter().filter(|e| **e == Element::Placeholder).count();
    let n_free = (n_segments - n_fixed).max(1);
    let shares: Vec<f64> = (0..n_free).map(|_| rng.random_range(0.5..1.5)).collect();
    let share_total: f64 = shares.iter().sum();
    let free_words = words.saturating_sub(2 * n_fixed).max(n_free);
    let mut budgets = shares.iter().map(|s| ((s / share_total) * free_words as f64).round().max(1.0) as usize);

    let mut texts: Vec<String> = Vec::with_capacity(n_segments);
    for &e in &elements {
        let budget = if e == Element::Placeholder { 2 } else { budgets.next().unwrap_or(1) };
        let mut text = element_text(&mut rng, e, budget);
        let mut attempt = 0;
        // segment texts within a document are pairwise distinct
        while texts.iter().any(|t| t.trim_end() == text) {
            attempt += 1;
            text = if attempt < 8 {
                element_text(&mut rng, e, budget)
            } else {
                format!("{text} ({attempt})")
            };
        }
        texts.push(text);
    }

    let names = alternating(&mut rng, labels, n_segments);
    let mut text = String::new();
    let mut segments = Vec::with_capacity(n_segments);
    let mut start = 0;
    for (i, (t, label)) in texts.iter().zip(names).enumerate() {
        text.push_str(t);
        if i + 1 < n_segments {
            text.push_str("\n\n");
        }
        let end = text.chars().count();
        segments.push(Segment::new(label, Span::new(start, end).expect("non-empty segment")));
        start = end;
    }
    let doc = boundseg::Document::new(format!("doc-{index:05}"), text).expect("non-empty document");
    DatasetRecord::from_parts(&doc, &Segmentation::new(segments))
}

fn alternating(rng: &mut ChaCha8Rng, labels: &LabelSet, n: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(n);
    while out.len() < n {
        let l = labels.names().choose(rng).unwrap();
        if out.last() != Some(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Generates `spec.n_docs` records. Document `i` depends only on the seed
/// and `i`.
pub fn generate_synthetic_corpus(spec: &CorpusSpec) -> Result<Vec<DatasetRecord>, CorpusError> {
    spec.validate()?;
    let labels = spec.label_set()?;
    Ok((0..spec.n_docs).map(|i| generate_doc(spec, &labels, i)).collect())
}

/// Word count of a record's text.
pub fn record_words(rec: &DatasetRecord) -> usize {
    word_count(&rec.text)
}
