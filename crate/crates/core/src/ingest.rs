//! Grade-record files: CSV with header `assignment_id,grader_id,gradee_id,score`
//! or a JSON array of objects with the same four keys.
//!
//! Malformed rows are rejected one at a time and reported with a line number
//! (CSV) or 1-based element position (JSON). Only a stream that cannot be
//! read or decoded at all is fatal.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::model::{GradeRecord, RecordIssue, Scale};

pub const CSV_HEADER: [&str; 4] = ["assignment_id", "grader_id", "gradee_id", "score"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown record format '{other}'")),
        }
    }
}

impl Format {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("bad CSV header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("JSON input must be an array of objects")]
    NotAnArray,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rejection_reasons: Vec<Rejection>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected
    }
}

struct Row {
    line: usize,
    fields: [Option<String>; 4],
    // raw score text, or None if the JSON value was not a number/string
    score_ok: bool,
}

/// Parses and validates records against `scale`.
///
/// Valid rows keep their input order. When the same
/// `(assignment, grader, gradee)` triple occurs more than once, the last
/// occurrence wins and each earlier one is rejected as superseded.
pub fn parse_records<R: Read>(
    mut source: R,
    format: Format,
    scale: &Scale,
) -> Result<(Vec<GradeRecord>, IngestReport), IngestError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| IngestError::NotUtf8)?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rows = match format {
        Format::Csv => csv_rows(text)?,
        Format::Json => json_rows(text)?,
    };
    Ok(validate_rows(rows, scale))
}

fn csv_rows(text: &str) -> Result<Vec<Row>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != CSV_HEADER {
        return Err(IngestError::BadHeader {
            expected: CSV_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |k: usize| {
            record
                .get(k)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        rows.push(Row {
            line,
            fields: [field(0), field(1), field(2), field(3)],
            score_ok: true,
        });
    }
    Ok(rows)
}

fn json_rows(text: &str) -> Result<Vec<Row>, IngestError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let items = value.as_array().ok_or(IngestError::NotAnArray)?;
    let mut rows = Vec::with_capacity(items.len());
    for (pos, item) in items.iter().enumerate() {
        let text_field = |key: &str| {
            item.get(key)
                .and_then(|v| v.as_str())
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
        };
        let (score, score_ok) = match item.get("score") {
            None | Some(serde_json::Value::Null) => (None, true),
            Some(serde_json::Value::Number(n)) => (Some(n.to_string()), true),
            Some(_) => (Some(String::new()), false),
        };
        rows.push(Row {
            line: pos + 1,
            fields: [
                text_field(CSV_HEADER[0]),
                text_field(CSV_HEADER[1]),
                text_field(CSV_HEADER[2]),
                score,
            ],
            score_ok,
        });
    }
    Ok(rows)
}

fn validate_rows(rows: Vec<Row>, scale: &Scale) -> (Vec<GradeRecord>, IngestReport) {
    let mut report = IngestReport::default();
    let mut candidates: Vec<(usize, GradeRecord)> = Vec::new();
    for row in rows {
        match row_to_record(&row, scale) {
            Ok(record) => candidates.push((row.line, record)),
            Err(issue) => {
                report.rejected += 1;
                report.rejection_reasons.push(Rejection {
                    line: row.line,
                    reason: issue.to_string(),
                });
            }
        }
    }

    let mut last: HashMap<(&str, &str, &str), usize> = HashMap::new();
    for (pos, (_, r)) in candidates.iter().enumerate() {
        last.insert((&r.assignment, &r.grader, &r.gradee), pos);
    }
    let keep: Vec<bool> = candidates
        .iter()
        .enumerate()
        .map(|(pos, (_, r))| last[&(r.assignment.as_str(), r.grader.as_str(), r.gradee.as_str())] == pos)
        .collect();
    let mut superseded = Vec::new();
    for (pos, (line, r)) in candidates.iter().enumerate() {
        if !keep[pos] {
            let winner = last[&(r.assignment.as_str(), r.grader.as_str(), r.gradee.as_str())];
            superseded.push(Rejection {
                line: *line,
                reason: format!("duplicate (superseded by line {})", candidates[winner].0),
            });
        }
    }
    report.rejected += superseded.len();
    report.rejection_reasons.extend(superseded);
    report.rejection_reasons.sort_by_key(|r| r.line);

    let records: Vec<GradeRecord> = candidates
        .into_iter()
        .zip(keep)
        .filter_map(|((_, r), k)| k.then_some(r))
        .collect();
    report.accepted = records.len();
    (records, report)
}

fn row_to_record(row: &Row, scale: &Scale) -> Result<GradeRecord, RecordIssue> {
    for (k, f) in row.fields.iter().enumerate() {
        if f.is_none() {
            return Err(RecordIssue::MissingField(CSV_HEADER[k]));
        }
    }
    let [a, g, e, s] = &row.fields;
    let score = if row.score_ok {
        s.as_deref()
            .unwrap_or_default()
            .parse::<f64>()
            .map_err(|_| RecordIssue::NonNumericScore)?
    } else {
        return Err(RecordIssue::NonNumericScore);
    };
    let record = GradeRecord::new(
        a.clone().unwrap_or_default(),
        g.clone().unwrap_or_default(),
        e.clone().unwrap_or_default(),
        score,
    );
    record.validate(scale)?;
    Ok(record)
}

/// Writes records in the CSV schema accepted by [`parse_records`].
pub fn write_records_csv<W: Write>(records: &[GradeRecord], sink: W) -> Result<(), IngestError> {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    writer.write_record(CSV_HEADER)?;
    for r in records {
        writer.write_record([
            r.assignment.as_str(),
            r.grader.as_str(),
            r.gradee.as_str(),
            &r.score.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
