//! Comparison tables across systems: overall AP/AR and per-bucket recall,
//! rendered as CSV or Markdown.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::EvaluationReport;

/// Placeholder for a cell with no value.
pub const EMPTY_CELL: &str = "-";

/// Labels that sort after every other bucket, in this order.
const TRAILING_LABELS: [&str; 3] = ["prefer not to say", "none", "unresolved"];

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("no reports to tabulate")]
    Empty,
    #[error("system name must not be empty")]
    EmptySystemName,
    #[error("duplicate entry for system {system:?}{}", stream.map(|s| format!(" stream {s}")).unwrap_or_default())]
    Duplicate { system: String, stream: Option<Stream> },
    #[error("report for system {system:?} has no buckets for attribute {key:?}")]
    MissingKey { system: String, key: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Grayscale,
    Rgb,
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stream::Grayscale => "grayscale",
            Stream::Rgb => "rgb",
        })
    }
}

impl FromStr for Stream {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "grayscale" | "gray" => Ok(Stream::Grayscale),
            "rgb" => Ok(Stream::Rgb),
            other => Err(format!("unknown stream {other:?} (expected rgb or grayscale)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemReport {
    pub system_name: String,
    pub stream: Option<Stream>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(format!("unknown format {other:?} (expected csv or markdown)")),
        }
    }
}

/// Three decimals, rounded half away from zero, trailing zeros trimmed:
/// `0.99`, `0.998`, `1`.
pub fn format_metric(value: f64) -> String {
    let scaled = (value * 1000.0).round() as i64;
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.unsigned_abs();
    let (int, frac) = (abs / 1000, abs % 1000);
    if frac == 0 {
        format!("{sign}{int}")
    } else {
        let digits = format!("{frac:03}");
        format!("{sign}{int}.{}", digits.trim_end_matches('0'))
    }
}

fn check_unique(reports: &[SystemReport]) -> Result<(), ReportError> {
    if reports.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut seen = HashSet::new();
    for r in reports {
        if r.system_name.is_empty() {
            return Err(ReportError::EmptySystemName);
        }
        if !seen.insert((r.system_name.as_str(), r.stream)) {
            return Err(ReportError::Duplicate {
                system: r.system_name.clone(),
                stream: r.stream,
            });
        }
    }
    Ok(())
}

/// System names in order of first appearance.
fn systems_in_order(reports: &[SystemReport]) -> Vec<&str> {
    let mut seen = HashSet::new();
    reports
        .iter()
        .map(|r| r.system_name.as_str())
        .filter(|s| seen.insert(*s))
        .collect()
}

/// One row per system with AP and AR columns; with streams present, one
/// AP/AR column pair per stream (missing combinations render as `-`).
pub fn overall_table(reports: &[SystemReport]) -> Result<Table, ReportError> {
    check_unique(reports)?;
    // None sorts first: unstreamed metrics lead when mixed with streams
    let streams: BTreeSet<Option<Stream>> = reports.iter().map(|r| r.stream).collect();
    let mut header = vec!["system".to_string()];
    for s in &streams {
        match s {
            None => header.extend(["ap".to_string(), "ar".to_string()]),
            Some(s) => header.extend([format!("{s}_ap"), format!("{s}_ar")]),
        }
    }
    let by_key: BTreeMap<(&str, Option<Stream>), &EvaluationReport> = reports
        .iter()
        .map(|r| ((r.system_name.as_str(), r.stream), &r.report))
        .collect();
    let rows = systems_in_order(reports)
        .into_iter()
        .map(|system| {
            let mut row = vec![system.to_string()];
            for s in &streams {
                match by_key.get(&(system, *s)) {
                    Some(r) => row.extend([format_metric(r.ap), format_metric(r.ar)]),
                    None => row.extend([EMPTY_CELL.to_string(), EMPTY_CELL.to_string()]),
                }
            }
            row
        })
        .collect();
    Ok(Table { header, rows })
}

#[derive(Debug, PartialEq, PartialOrd)]
enum LabelClass {
    Numeric(f64),
    Text,
    Trailing(usize),
}

/// Leading number of a range-like label: `18-20`, `80+`, `35 to 40`, `7`.
fn numeric_lower_bound(label: &str) -> Option<f64> {
    let t = label.trim();
    let end = t
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_digit() || *c == '.'))
        .map_or(t.len(), |(i, _)| i);
    let lower: f64 = t[..end].parse().ok()?;
    let rest = t[end..].trim();
    let ok = rest.is_empty()
        || rest == "+"
        || ["-", "–", "to"].iter().any(|sep| {
            rest.strip_prefix(sep)
                .map(|hi| hi.trim().parse::<f64>().is_ok())
                .unwrap_or(false)
        });
    ok.then_some(lower)
}

fn classify(label: &str) -> LabelClass {
    let lower = label.trim().to_lowercase();
    if let Some(i) = TRAILING_LABELS.iter().position(|t| *t == lower) {
        return LabelClass::Trailing(i);
    }
    match numeric_lower_bound(label) {
        Some(v) => LabelClass::Numeric(v),
        None => LabelClass::Text,
    }
}

/// Bucket row order: numeric ranges by lower bound, then other labels
/// lexicographically, then "prefer not to say", "None" and "unresolved".
pub fn compare_labels(a: &str, b: &str) -> std::cmp::Ordering {
    let rank = |c: &LabelClass| match c {
        LabelClass::Numeric(_) => 0,
        LabelClass::Text => 1,
        LabelClass::Trailing(_) => 2,
    };
    let (ca, cb) = (classify(a), classify(b));
    rank(&ca)
        .cmp(&rank(&cb))
        .then_with(|| match (&ca, &cb) {
            (LabelClass::Numeric(x), LabelClass::Numeric(y)) => x.total_cmp(y),
            (LabelClass::Trailing(x), LabelClass::Trailing(y)) => x.cmp(y),
            _ => std::cmp::Ordering::Equal,
        })
        .then_with(|| a.cmp(b))
}

/// Per-label recall for `key`, one column per system (and stream).
pub fn bucket_table(reports: &[SystemReport], key: &str) -> Result<Table, ReportError> {
    check_unique(reports)?;
    let mut labels: Vec<&str> = Vec::new();
    let mut columns: Vec<BTreeMap<&str, f64>> = Vec::new();
    for r in reports {
        let col: BTreeMap<&str, f64> = r
            .report
            .buckets
            .iter()
            .filter(|b| b.key == key)
            .map(|b| (b.label.as_str(), b.recall))
            .collect();
        if col.is_empty() {
            return Err(ReportError::MissingKey {
                system: r.system_name.clone(),
                key: key.to_string(),
            });
        }
        labels.extend(col.keys().copied());
        columns.push(col);
    }
    labels.sort_by(|a, b| compare_labels(a, b));
    labels.dedup();

    let mut header = vec![key.to_string()];
    header.extend(reports.iter().map(|r| match r.stream {
        Some(s) => format!("{} ({s})", r.system_name),
        None => r.system_name.clone(),
    }));
    let rows = labels
        .iter()
        .map(|label| {
            let mut row = vec![label.to_string()];
            row.extend(columns.iter().map(|c| {
                c.get(label)
                    .map_or_else(|| EMPTY_CELL.to_string(), |v| format_metric(*v))
            }));
            row
        })
        .collect();
    Ok(Table { header, rows })
}

fn render_csv(table: &Table) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&table.header).expect("in-memory write");
    for row in &table.rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

fn markdown_cell(s: &str) -> String {
    s.replace('\\', "\\\\").replace('|', "\\|")
}

fn render_markdown(table: &Table) -> String {
    let line = |cells: &[String]| {
        let inner: Vec<String> = cells.iter().map(|c| markdown_cell(c)).collect();
        format!("| {} |\n", inner.join(" | "))
    };
    let mut out = line(&table.header);
    out.push('|');
    for _ in &table.header {
        out.push_str(" --- |");
    }
    out.push('\n');
    for row in &table.rows {
        out.push_str(&line(row));
    }
    out
}

pub fn render(table: &Table, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => render_csv(table),
        TableFormat::Markdown => render_markdown(table),
    }
}
