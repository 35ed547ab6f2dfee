//! Telemetry CSV ingestion: `timestamp,key,value[,source]`.

use std::fmt;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::engine::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TelemetryValue {
    Number(f64),
    Text(String),
}

impl TelemetryValue {
    fn parse(cell: &str) -> Self {
        let cell = cell.trim();
        match cell.parse::<f64>() {
            Ok(x) if x.is_finite() => TelemetryValue::Number(x),
            _ => TelemetryValue::Text(cell.to_string()),
        }
    }
}

impl fmt::Display for TelemetryValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TelemetryValue::Number(x) => write!(f, "{x}"),
            TelemetryValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub timestamp: Timestamp,
    pub source: String,
    pub key: String,
    pub value: TelemetryValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub samples: Vec<TelemetrySample>,
    /// Rows that were skipped, with the reason.
    pub warnings: Vec<String>,
}

/// Epoch milliseconds, RFC 3339, or a zone-less ISO-8601 date-time (UTC).
pub fn parse_timestamp(cell: &str) -> Option<Timestamp> {
    let cell = cell.trim();
    if let Ok(ms) = cell.parse::<u64>() {
        return Some(ms);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return u64::try_from(dt.timestamp_millis()).ok();
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(cell, fmt) {
            return u64::try_from(dt.and_utc().timestamp_millis()).ok();
        }
    }
    None
}

/// Parses telemetry CSV. `source` names the file for samples that carry no
/// `source` column. Output is sorted by timestamp (stable).
pub fn ingest_telemetry(text: &str, source: &str) -> Result<Ingested, AnalysisError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| AnalysisError::Telemetry(e.to_string()))?.clone();
    let column = |name: &str| header.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(ts_col), Some(key_col), Some(val_col)) = (column("timestamp"), column("key"), column("value")) else {
        return Err(AnalysisError::MissingHeader);
    };
    let src_col = column("source");

    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let cell = |c: usize| record.get(c).unwrap_or("");
        let Some(timestamp) = parse_timestamp(cell(ts_col)) else {
            warnings.push(format!("line {line}: unparseable timestamp `{}`", cell(ts_col)));
            continue;
        };
        let key = cell(key_col);
        if key.is_empty() {
            warnings.push(format!("line {line}: empty key"));
            continue;
        }
        let source = src_col.map(cell).filter(|s| !s.is_empty()).unwrap_or(source);
        samples.push(TelemetrySample {
            timestamp,
            source: source.to_string(),
            key: key.to_string(),
            value: TelemetryValue::parse(cell(val_col)),
        });
    }
    if samples.is_empty() {
        return Err(AnalysisError::NoSamples);
    }
    samples.sort_by_key(|s| s.timestamp);
    Ok(Ingested { samples, warnings })
}
