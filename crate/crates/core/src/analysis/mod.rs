//! Mission reports: status totals, deviations, issues, and TD records checked
//! against external telemetry.

mod markdown;
mod telemetry;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use markdown::render_markdown;
pub use telemetry::{ingest_telemetry, parse_timestamp, Ingested, TelemetrySample, TelemetryValue};

use crate::engine::{self, DataRecord, EngineError, EventKind, EventRecord, IssueReport, MissionState, TaskStatus, Timestamp};
use crate::model::{TaskGraph, TaskNode};

pub const DEFAULT_TOLERANCE_S: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("telemetry needs a header with timestamp, key and value columns")]
    MissingHeader,
    #[error("no samples")]
    NoSamples,
    #[error("unreadable telemetry: {0}")]
    Telemetry(String),
    #[error(transparent)]
    Log(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Agree,
    Disagree,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdValidation {
    pub task_id: String,
    pub field_name: String,
    pub telemetry_key: String,
    pub recorded_value: Value,
    pub recorded_at: Timestamp,
    pub valid: bool,
    pub matches: Vec<TelemetrySample>,
    pub verdict: Verdict,
}

/// Numbers agree within a relative 1e-9; text compares case-insensitively.
pub fn values_agree(recorded: &Value, sample: &TelemetryValue) -> bool {
    let recorded_num = match recorded {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    };
    match (recorded_num, sample) {
        (Some(a), TelemetryValue::Number(b)) => a == *b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()),
        (_, TelemetryValue::Text(t)) => {
            let text = match recorded {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            text.trim().eq_ignore_ascii_case(t.trim())
        }
        (None, TelemetryValue::Number(_)) => false,
    }
}

/// Checks every TD record whose spec names a telemetry key against samples
/// of that key within `tolerance_s` seconds.
pub fn correlate(
    tasks: &[TaskNode],
    records: &[DataRecord],
    samples: &[TelemetrySample],
    tolerance_s: f64,
) -> Vec<TdValidation> {
    let keys: BTreeMap<&str, &str> = tasks
        .iter()
        .filter_map(|t| {
            let key = t.data_spec.as_ref()?.telemetry_key.as_deref()?;
            Some((t.task_id.as_str(), key))
        })
        .collect();
    let window_ms = tolerance_s * 1000.0;
    records
        .iter()
        .filter_map(|r| {
            let key = *keys.get(r.task_id.as_str())?;
            let matches: Vec<TelemetrySample> = samples
                .iter()
                .filter(|s| s.key == key && (s.timestamp as f64 - r.recorded_at as f64).abs() <= window_ms)
                .cloned()
                .collect();
            let verdict = if matches.is_empty() {
                Verdict::Unmatched
            } else if matches.iter().any(|s| values_agree(&r.value, &s.value)) {
                Verdict::Agree
            } else {
                Verdict::Disagree
            };
            Some(TdValidation {
                task_id: r.task_id.clone(),
                field_name: r.field_name.clone(),
                telemetry_key: key.to_string(),
                recorded_value: r.value.clone(),
                recorded_at: r.recorded_at,
                valid: r.valid,
                matches,
                verdict,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTotals {
    pub phase: String,
    pub totals: BTreeMap<TaskStatus, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deviation {
    pub task_id: String,
    pub status: TaskStatus,
    /// `failed`, `skipped` and/or `duration_exceeded`.
    pub reasons: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueEntry {
    #[serde(flatten)]
    pub issue: IssueReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_when: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub timestamp: Timestamp,
    pub source: String,
    pub seq: u64,
    pub what: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
}

/// Source name used for mission events on the timeline.
pub const MISSION_SOURCE: &str = "mission";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub mission_id: String,
    pub mission_template_id: String,
    pub name: String,
    pub tolerance_s: f64,
    pub task_count: usize,
    pub closed: bool,
    pub totals: BTreeMap<TaskStatus, usize>,
    pub per_phase: Vec<PhaseTotals>,
    pub deviations: Vec<Deviation>,
    pub issues: Vec<IssueEntry>,
    pub td_validation: Vec<TdValidation>,
    pub verdicts: BTreeMap<Verdict, usize>,
    pub timeline: Vec<TimelineEntry>,
}

fn zero_totals() -> BTreeMap<TaskStatus, usize> {
    TaskStatus::ALL.iter().map(|s| (*s, 0)).collect()
}

fn describe(e: &EventRecord) -> String {
    let field = |k: &str| e.payload.get(k).map(|v| v.as_str().map_or_else(|| v.to_string(), str::to_string));
    let subject = e.task_id.as_deref().map(|t| format!(" {t}")).unwrap_or_default();
    let detail = match e.kind {
        EventKind::ConditionConfirmed | EventKind::ConditionOverridden => field("condition").map(|c| format!(" `{c}`")),
        EventKind::DataRecorded => field("value").map(|v| format!(" = {v}")),
        EventKind::TaskFailed | EventKind::TaskSkipped => field("note").map(|n| format!(": {n}")),
        EventKind::IssueReported => field("text").map(|t| format!(": {t}")),
        EventKind::Warning => field("message").map(|m| format!(": {m}")),
        _ => None,
    };
    format!("{}{subject} by {}{}", e.kind, e.actor, detail.unwrap_or_default())
}

/// Builds the report from a mission state (usually the result of replay).
pub fn report_from_state(state: &MissionState, samples: &[TelemetrySample], tolerance_s: f64) -> AnalysisReport {
    let graph = state.graph();
    let mut totals = zero_totals();
    let mut per_phase: Vec<PhaseTotals> =
        graph.phases.iter().map(|p| PhaseTotals { phase: p.clone(), totals: zero_totals() }).collect();
    for (task, status) in state.statuses() {
        *totals.entry(status).or_default() += 1;
        let slot = match per_phase.iter().position(|p| p.phase == task.phase) {
            Some(i) => i,
            None => {
                per_phase.push(PhaseTotals { phase: task.phase.clone(), totals: zero_totals() });
                per_phase.len() - 1
            }
        };
        *per_phase[slot].totals.entry(status).or_default() += 1;
    }

    let deviations = state
        .statuses()
        .filter_map(|(task, status)| {
            let mut reasons = Vec::new();
            match status {
                TaskStatus::Failed => reasons.push("failed".to_string()),
                TaskStatus::Skipped => reasons.push("skipped".to_string()),
                _ => {}
            }
            if state.alarmed(&task.task_id) {
                reasons.push("duration_exceeded".to_string());
            }
            (!reasons.is_empty()).then(|| Deviation {
                task_id: task.task_id.clone(),
                status,
                reasons,
                note: state.note(&task.task_id).map(str::to_string),
            })
        })
        .collect();

    let issues = state
        .issues()
        .iter()
        .map(|i| IssueEntry {
            issue: i.clone(),
            task_when: i.task_id.as_deref().and_then(|t| state.task(t)).map(|t| t.when.clone()),
        })
        .collect();

    let td_validation = correlate(state.tasks(), state.data(), samples, tolerance_s);
    let mut verdicts: BTreeMap<Verdict, usize> =
        [Verdict::Agree, Verdict::Disagree, Verdict::Unmatched].into_iter().map(|v| (v, 0)).collect();
    for v in &td_validation {
        *verdicts.entry(v.verdict).or_default() += 1;
    }

    let mut timeline: Vec<TimelineEntry> = state
        .events()
        .iter()
        .map(|e| TimelineEntry {
            timestamp: e.timestamp,
            source: MISSION_SOURCE.to_string(),
            seq: e.seq,
            what: describe(e),
            task_id: e.task_id.clone(),
        })
        .collect();
    timeline.extend(samples.iter().enumerate().map(|(i, s)| TimelineEntry {
        timestamp: s.timestamp,
        source: s.source.clone(),
        seq: i as u64 + 1,
        what: format!("{} = {}", s.key, s.value),
        task_id: None,
    }));
    timeline.sort_by(|a, b| (a.timestamp, &a.source, a.seq).cmp(&(b.timestamp, &b.source, b.seq)));

    AnalysisReport {
        mission_id: state.mission_id().to_string(),
        mission_template_id: graph.mission_template_id.clone(),
        name: graph.name.clone(),
        tolerance_s,
        task_count: state.tasks().len(),
        closed: state.is_closed(),
        totals,
        per_phase,
        deviations,
        issues,
        td_validation,
        verdicts,
        timeline,
    }
}

/// Replays `events` and builds the report.
pub fn build_report(
    mission_id: &str,
    events: &[EventRecord],
    graph: Arc<TaskGraph>,
    samples: &[TelemetrySample],
    tolerance_s: f64,
) -> Result<AnalysisReport, AnalysisError> {
    let state = engine::replay(mission_id, events, graph, &BTreeMap::new())?;
    Ok(report_from_state(&state, samples, tolerance_s))
}

/// Issue-tracker import record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueExport {
    pub title: String,
    pub body: String,
    pub labels: Vec<String>,
}

pub fn export_issues(report: &AnalysisReport) -> Vec<IssueExport> {
    report
        .issues
        .iter()
        .map(|entry| {
            let i = &entry.issue;
            let scope = i.task_id.as_deref().map_or_else(|| "mission".to_string(), |t| format!("task {t}"));
            let mut body = format!(
                "{}\n\nMission: {} ({})\nScope: {scope}\nReporter: {}\nSeverity: {}\nLast event before report: seq {}\n",
                i.text, report.mission_id, report.mission_template_id, i.reporter, i.severity, i.state_snapshot_ref
            );
            if let Some(when) = &entry.task_when {
                body.push_str(&format!("Step: {when}\n"));
            }
            let mut labels = vec![report.mission_id.clone()];
            labels.extend(i.task_id.clone());
            labels.push(i.severity.to_string());
            let title: String = i.text.lines().next().unwrap_or("").chars().take(80).collect();
            IssueExport { title: format!("[{}] {title}", i.severity), body, labels }
        })
        .collect()
}
