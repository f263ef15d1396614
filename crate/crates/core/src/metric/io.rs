//! Metric file formats: JSON (`{"labels": [...], "dist": [[...]]}`), CSV
//! (header row of labels followed by the square matrix) and graph edge lists
//! (`u v weight` per line, `#` comments allowed).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MetricError, MetricSpace};

#[derive(Debug, Error)]
pub enum MetricIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub dist: Vec<Vec<f64>>,
}

pub fn from_json_str(s: &str) -> Result<MetricSpace, MetricIoError> {
    let raw: MetricJson = serde_json::from_str(s)?;
    let labels = raw.labels.unwrap_or_else(|| (0..raw.dist.len()).map(|i| format!("p{i}")).collect());
    Ok(MetricSpace::from_labeled(labels, raw.dist)?)
}

pub fn to_json_value(m: &MetricSpace) -> serde_json::Value {
    serde_json::json!({ "labels": m.labels(), "dist": m.to_rows() })
}

pub fn from_csv_str(s: &str) -> Result<MetricSpace, MetricIoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(s.as_bytes());
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| MetricIoError::Parse { line: i + 2, msg: e.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(MetricSpace::from_labeled(labels, rows)?)
}

pub fn to_csv_string(m: &MetricSpace) -> String {
    let mut out = m.labels().join(",");
    out.push('\n');
    for row in m.to_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn from_edge_list_str(s: &str) -> Result<MetricSpace, MetricIoError> {
    let mut edges = Vec::new();
    for (i, line) in s.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(MetricIoError::Parse { line: i + 1, msg: "expected `u v weight`".into() });
        }
        let w = parts[2]
            .parse::<f64>()
            .map_err(|e| MetricIoError::Parse { line: i + 1, msg: e.to_string() })?;
        edges.push((parts[0].to_string(), parts[1].to_string(), w));
    }
    Ok(MetricSpace::from_graph(&edges)?)
}

/// Load a metric, choosing the format by extension: `.json`, `.csv`, and
/// anything else is read as an edge list.
pub fn load(path: &Path) -> Result<MetricSpace, MetricIoError> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => from_json_str(&text),
        Some("csv") => from_csv_str(&text),
        _ => from_edge_list_str(&text),
    }
}
