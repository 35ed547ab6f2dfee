//! NDJSON event logs and replay.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{EngineError, EventRecord, MissionState};
use crate::model::TaskGraph;

/// One event as a single JSON line (no trailing newline). Keys appear in
/// struct order; payload keys are sorted.
pub fn write_ndjson_line(event: &EventRecord) -> String {
    serde_json::to_string(event).expect("event serializes")
}

pub fn to_ndjson(events: &[EventRecord]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&write_ndjson_line(e));
        out.push('\n');
    }
    out
}

/// Parses a log. Blank lines are ignored; anything else unparseable makes
/// the log corrupt.
pub fn parse_ndjson(text: &str) -> Result<Vec<EventRecord>, EngineError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: EventRecord = serde_json::from_str(line).map_err(|e| EngineError::CorruptLog {
            seq: out.last().map_or(0, |e: &EventRecord| e.seq) + 1,
            reason: format!("line {}: {e}", n + 1),
        })?;
        out.push(event);
    }
    Ok(out)
}

/// Rebuilds a mission from its log. An empty log yields the freshly started
/// mission (at time 0) for `bindings`; otherwise the bindings recorded in the
/// `mission_started` event win and must agree with `bindings` if any are given.
pub fn replay(
    mission_id: &str,
    events: &[EventRecord],
    graph: Arc<TaskGraph>,
    bindings: &BTreeMap<String, String>,
) -> Result<MissionState, EngineError> {
    for (i, e) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if e.seq != expected {
            return Err(EngineError::MissingSeq(expected));
        }
    }
    let Some(first) = events.first() else {
        return MissionState::start_shared(mission_id, graph, bindings.clone(), 0);
    };
    let mut state = MissionState::from_start_event(graph, first)?;
    if !bindings.is_empty() && state.bindings() != bindings {
        return Err(EngineError::CorruptLog { seq: 1, reason: "recorded bindings differ from the supplied ones".into() });
    }
    for e in &events[1..] {
        state.apply_event(e).map_err(|err| match err {
            EngineError::CorruptLog { .. } | EngineError::MissingSeq(_) => err,
            other => EngineError::CorruptLog { seq: e.seq, reason: other.to_string() },
        })?;
    }
    Ok(state)
}
