//! Line format for boundary outputs.
//!
//! One item per line, fields separated by TAB (0x09), lines by LF (0x0A):
//!
//! ```text
//! label<TAB>start_seq              (Start)
//! label<TAB>end_seq                (End)
//! label<TAB>start_seq<TAB>end_seq  (StartEnd)
//! ```
//!
//! Inside sequences, `\`, LF, CR and TAB are escaped as `\\`, `\n`, `\r`
//! and `\t`. Fields are trimmed before unescaping, so literal surrounding
//! spaces do not survive a round trip while escaped line breaks do.

use serde::Serialize;
use thiserror::Error;

use super::{BoundaryItem, BoundaryOutput, OutputPattern};
use crate::segmentation::LabelSet;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseError {
    #[error("line {line}: expected {expected} tab-separated fields, found {found}")]
    MalformedLine {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: empty token sequence")]
    EmptySequence { line: usize },
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
    #[error("no valid boundary lines")]
    EmptyOutput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Bad lines are dropped into diagnostics instead of failing the parse.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub error: ParseError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub output: BoundaryOutput,
    pub diagnostics: Vec<LineDiagnostic>,
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            // unknown escapes are kept verbatim
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub fn serialize(out: &BoundaryOutput) -> String {
    let mut lines = Vec::with_capacity(out.len());
    for item in out.items() {
        let mut line = item.label.clone();
        for seq in [&item.start_seq, &item.end_seq].into_iter().flatten() {
            line.push('\t');
            line.push_str(&escape_field(seq));
        }
        lines.push(line);
    }
    lines.join("\n")
}

/// Strict parse.
pub fn parse(
    text: &str,
    labels: &LabelSet,
    pattern: OutputPattern,
) -> Result<BoundaryOutput, ParseError> {
    parse_with(text, labels, pattern, ParseMode::Strict).map(|p| p.output)
}

/// Parses the line format. Blank lines are skipped; line numbers are 1-based.
pub fn parse_with(
    text: &str,
    labels: &LabelSet,
    pattern: OutputPattern,
    mode: ParseMode,
) -> Result<Parsed, ParseError> {
    let mut items = Vec::new();
    let mut diagnostics = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        match parse_line(raw, line, labels, pattern) {
            Ok(item) => items.push(item),
            Err(err) => match mode {
                ParseMode::Strict => return Err(err),
                ParseMode::Lenient => diagnostics.push(LineDiagnostic { line, error: err }),
            },
        }
    }
    if items.is_empty() {
        return Err(ParseError::EmptyOutput);
    }
    let output = BoundaryOutput::new(pattern, items).map_err(|_| ParseError::EmptyOutput)?;
    Ok(Parsed {
        output,
        diagnostics,
    })
}

fn parse_line(
    raw: &str,
    line: usize,
    labels: &LabelSet,
    pattern: OutputPattern,
) -> Result<BoundaryItem, ParseError> {
    let fields: Vec<&str> = raw.split('\t').collect();
    let expected = pattern.field_count();
    if fields.len() != expected {
        return Err(ParseError::MalformedLine {
            line,
            expected,
            found: fields.len(),
        });
    }
    let label = fields[0].trim();
    if !labels.contains(label) {
        return Err(ParseError::UnknownLabel {
            line,
            label: label.to_string(),
        });
    }
    let mut seqs = Vec::with_capacity(2);
    for field in &fields[1..] {
        let seq = unescape_field(field.trim());
        if seq.trim().is_empty() {
            return Err(ParseError::EmptySequence { line });
        }
        seqs.push(seq);
    }
    let mut seqs = seqs.into_iter();
    Ok(match pattern {
        OutputPattern::Start => BoundaryItem::start(label, seqs.next().unwrap_or_default()),
        OutputPattern::End => BoundaryItem::end(label, seqs.next().unwrap_or_default()),
        OutputPattern::StartEnd => BoundaryItem::start_end(
            label,
            seqs.next().unwrap_or_default(),
            seqs.next().unwrap_or_default(),
        ),
    })
}

/// Cuts `raw` before the first occurrence of `marker`.
pub fn truncate_at_end_marker<'a>(raw: &'a str, marker: &str) -> &'a str {
    if marker.is_empty() {
        return raw;
    }
    match raw.find(marker) {
        Some(pos) => &raw[..pos],
        None => raw,
    }
}
