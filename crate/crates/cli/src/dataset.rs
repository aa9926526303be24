//! JSONL dataset I/O.
//!
//! One record per line with keys `id`, `text` and `segments` (each
//! `{label, start, end}` in character offsets). Saved files start with a
//! header line `{"offset_unit":"char"}`; loading accepts files with or
//! without it.

use std::fs;
use std::io::Write;
use std::path::Path;

use boundseg::segmentation::validate_segmentation;
use boundseg::{Document, Segment, Segmentation, Span};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: invalid gold segmentation: {reason}")]
    InvalidGold { line: usize, reason: String },
    #[error("duplicate document id `{id}` at line {line}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSegment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl From<&Segment> for RecordSegment {
    fn from(s: &Segment) -> Self {
        Self {
            label: s.label.clone(),
            start: s.span.start(),
            end: s.span.end(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub text: String,
    pub segments: Vec<RecordSegment>,
}

/// A validated record.
#[derive(Debug, Clone)]
pub struct Example {
    pub doc: Document,
    pub gold: Segmentation,
}

impl DatasetRecord {
    pub fn from_parts(doc: &Document, gold: &Segmentation) -> Self {
        Self {
            id: doc.id().to_string(),
            text: doc.text().to_string(),
            segments: gold.iter().map(RecordSegment::from).collect(),
        }
    }

    /// Builds the document and checks that the segmentation is valid and
    /// lossless.
    pub fn to_example(&self) -> Result<Example, String> {
        let doc = Document::new(self.id.clone(), self.text.clone()).map_err(|e| e.to_string())?;
        let gold = to_segmentation(&self.segments)?;
        let report = validate_segmentation(&doc, &gold);
        if let Some(v) = report.violations.first() {
            return Err(v.to_string());
        }
        if !report.lossless {
            return Err("segments do not cover the text without gaps".into());
        }
        Ok(Example { doc, gold })
    }
}

pub fn to_segmentation(segments: &[RecordSegment]) -> Result<Segmentation, String> {
    segments
        .iter()
        .map(|s| {
            Span::new(s.start, s.end)
                .map(|span| Segment::new(s.label.clone(), span))
                .map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()
        .map(Segmentation::new)
}

fn is_header(v: &Value) -> bool {
    v.as_object().is_some_and(|o| o.contains_key("offset_unit") && !o.contains_key("id"))
}

/// Reads JSONL lines as values, skipping blank lines and an optional
/// header. Returns `(line number, value)` pairs.
pub fn read_jsonl(path: &Path) -> Result<Vec<(usize, Value)>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| DatasetError::Schema {
            line,
            message: e.to_string(),
        })?;
        if out.is_empty() && is_header(&value) {
            match value.get("offset_unit").and_then(Value::as_str) {
                Some("char") => continue,
                other => {
                    return Err(DatasetError::Schema {
                        line,
                        message: format!("unsupported offset_unit {other:?}"),
                    })
                }
            }
        }
        out.push((line, value));
    }
    Ok(out)
}

pub fn load_records(path: &Path) -> Result<Vec<(usize, DatasetRecord)>, DatasetError> {
    let mut seen = std::collections::HashSet::new();
    read_jsonl(path)?
        .into_iter()
        .map(|(line, v)| {
            let rec: DatasetRecord = serde_json::from_value(v).map_err(|e| DatasetError::Schema {
                line,
                message: e.to_string(),
            })?;
            if !seen.insert(rec.id.clone()) {
                return Err(DatasetError::DuplicateId { line, id: rec.id });
            }
            Ok((line, rec))
        })
        .collect()
}

/// Loads and validates every record.
pub fn load_dataset(path: &Path) -> Result<Vec<Example>, DatasetError> {
    load_records(path)?
        .into_iter()
        .map(|(line, rec)| rec.to_example().map_err(|reason| DatasetError::InvalidGold { line, reason }))
        .collect()
}

pub fn dataset_to_string(records: &[DatasetRecord]) -> String {
    let mut out = String::from("{\"offset_unit\":\"char\"}\n");
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn save_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), DatasetError> {
    write_atomic(path, &dataset_to_string(records))
}
