//! Independent oracles shared by the integration suites and the acceptance
//! run. They recompute results from first principles and never call the
//! library function they check.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use fits_core::analysis::{TelemetrySample, TelemetryValue, Verdict};
use fits_core::engine::{DataRecord, EventKind, EventRecord, MissionState, TaskStatus};
use fits_core::model::{
    DataSpec, DataType, Domain, Priority, Responsible, ScenarioTemplate, StepTemplate, StepType, TaskGraph, TaskNode,
    TaskOrigin, VariableKind,
};
use petgraph::graph::DiGraph;
use regex::Regex;
use serde_json::Value;

// ---- expansion and inlining ----------------------------------------------

/// Names a step mentions: `<name>` anywhere, plus bare alphabetic runs in
/// the step id.
pub fn mentioned_names(step: &StepTemplate) -> BTreeSet<String> {
    let placeholder = Regex::new(r"<([A-Za-z_][A-Za-z0-9_]*)>").unwrap();
    let mut texts = vec![step.step_id.clone(), step.when.clone()];
    texts.extend(step.given.iter().chain(&step.then).map(|c| c.raw.clone()));
    if let Some(r) = &step.responsible {
        texts.push(r.to_string());
    }
    let mut names: BTreeSet<String> =
        texts.iter().flat_map(|t| placeholder.captures_iter(t).map(|c| c[1].to_string()).collect::<Vec<_>>()).collect();
    let bare = Regex::new(r"[A-Za-z_]+").unwrap();
    let stripped = placeholder.replace_all(&step.step_id, ".");
    names.extend(bare.find_iter(&stripped).map(|m| m.as_str().to_string()));
    names
}

pub fn domain_size(d: &Domain) -> usize {
    match d {
        Domain::Range { start, end } => (*start..=*end).count(),
        Domain::Values(v) => v.len(),
    }
}

/// Σ over steps of Π |domain| for the index variables the step mentions.
pub fn enumeration_oracle(t: &ScenarioTemplate) -> usize {
    t.steps
        .iter()
        .map(|s| {
            let names = mentioned_names(s);
            t.variables
                .iter()
                .filter(|v| v.kind == VariableKind::Index && names.contains(&v.name))
                .map(|v| domain_size(&v.domain))
                .product::<usize>()
        })
        .sum()
}

/// Label of a task for isomorphism: everything except its id and origin.
pub fn task_label(g: &TaskGraph, i: usize) -> String {
    let t = &g.tasks[i];
    let mut given = t.given.clone();
    given.sort();
    let mut then = t.then.clone();
    then.sort();
    format!(
        "{given:?}|{}|{then:?}|{:?}|{}|{}|{}|{:?}|{:?}",
        t.when, t.step_type, t.responsible, t.priority, t.phase, t.duration_limit, t.data_spec
    )
}

pub fn dependency_graph(g: &TaskGraph) -> DiGraph<String, ()> {
    let mut dg = DiGraph::new();
    let nodes: Vec<_> = (0..g.tasks.len()).map(|i| dg.add_node(task_label(g, i))).collect();
    for (i, a) in g.tasks.iter().enumerate() {
        for (j, b) in g.tasks.iter().enumerate() {
            if a.then.iter().any(|c| b.given.contains(c)) {
                dg.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    dg
}

pub fn isomorphic(a: &TaskGraph, b: &TaskGraph) -> bool {
    a.conditions == b.conditions
        && petgraph::algo::is_isomorphic_matching(&dependency_graph(a), &dependency_graph(b), |x, y| x == y, |_, _| true)
}

// ---- availability ----------------------------------------------------------

/// Everything a role should see, recomputed from the graph and the raw log.
pub fn brute_force_view(g: &TaskGraph, events: &[EventRecord], role: &str) -> Vec<(String, TaskStatus)> {
    let bindings: BTreeMap<String, String> =
        serde_json::from_value(events[0].payload["bindings"].clone()).unwrap_or_default();
    let mut tasks: Vec<TaskNode> = g.tasks.clone();
    let mut touched: BTreeMap<String, TaskStatus> = BTreeMap::new();
    let mut satisfied: BTreeSet<String> = BTreeSet::new();
    let mut priority: BTreeMap<String, u8> = BTreeMap::new();
    for e in events {
        let task = e.task_id.clone().unwrap_or_default();
        match e.kind {
            EventKind::ConditionConfirmed | EventKind::ConditionOverridden => {
                satisfied.insert(e.payload["condition"].as_str().unwrap().to_string());
            }
            EventKind::TaskStarted => {
                touched.insert(task, TaskStatus::InProgress);
            }
            EventKind::TaskCompleted => {
                let t = tasks.iter().find(|t| t.task_id == task).unwrap();
                satisfied.extend(t.then.iter().cloned());
                touched.insert(task, TaskStatus::Completed);
            }
            EventKind::TaskFailed => {
                touched.insert(task, TaskStatus::Failed);
            }
            EventKind::TaskSkipped => {
                touched.insert(task, TaskStatus::Skipped);
            }
            EventKind::TaskRetried => {
                let mut copy = tasks.iter().find(|t| t.task_id == task).unwrap().clone();
                copy.task_id = e.payload["new_task_id"].as_str().unwrap().to_string();
                tasks.push(copy);
            }
            EventKind::TaskReprioritized => {
                priority.insert(task, e.payload["priority"].as_u64().unwrap() as u8);
            }
            _ => {}
        }
    }
    let resolve = |r: &Responsible| match r {
        Responsible::Role(r) => r.clone(),
        Responsible::Binding(k) => bindings[k].clone(),
    };
    let phase_index = |p: &str| g.phases.iter().position(|x| x == p).unwrap_or(g.phases.len());
    let mut view: Vec<(u8, usize, String, TaskStatus)> = tasks
        .iter()
        .filter(|t| resolve(&t.responsible) == role)
        .filter_map(|t| {
            let status = match touched.get(&t.task_id) {
                Some(s) => *s,
                None if t.given.iter().all(|c| satisfied.contains(c)) => TaskStatus::Available,
                None => TaskStatus::Pending,
            };
            matches!(status, TaskStatus::Available | TaskStatus::InProgress).then(|| {
                let p = priority.get(&t.task_id).copied().unwrap_or(t.priority.get());
                (p, phase_index(&t.phase), t.task_id.clone(), status)
            })
        })
        .collect();
    view.sort();
    view.into_iter().map(|(_, _, id, s)| (id, s)).collect()
}

/// Then-sets of completed tasks plus confirmations, folded over the log.
pub fn satisfied_fold(state: &MissionState) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for e in state.events() {
        match e.kind {
            EventKind::ConditionConfirmed | EventKind::ConditionOverridden => {
                out.insert(e.payload["condition"].as_str().unwrap().to_string());
            }
            EventKind::TaskCompleted => out.extend(state.task(e.task_id.as_deref().unwrap()).unwrap().then.clone()),
            _ => {}
        }
    }
    out
}

// ---- correlation -----------------------------------------------------------

pub fn td_task(id: &str, key: &str) -> TaskNode {
    TaskNode {
        task_id: id.into(),
        origin: TaskOrigin { scenario_id: "T".into(), step_id: id.into(), assignment: BTreeMap::new() },
        given: vec![],
        when: "record".into(),
        then: vec![],
        step_type: StepType::DataCollection,
        responsible: Responsible::Role("pilot".into()),
        priority: Priority::default(),
        phase: String::new(),
        duration_limit: None,
        data_spec: Some(DataSpec {
            field_name: key.into(),
            datatype: DataType::Text,
            validation: None,
            telemetry_key: Some(key.into()),
        }),
    }
}

pub fn rec(task: &str, value: Value, at_ms: u64) -> DataRecord {
    DataRecord {
        task_id: task.into(),
        field_name: "f".into(),
        value,
        recorded_at: at_ms,
        recorded_by: "pilot".into(),
        valid: true,
        seq: 1,
    }
}

pub fn sample(at_ms: u64, key: &str, value: TelemetryValue) -> TelemetrySample {
    TelemetrySample { timestamp: at_ms, source: "fc".into(), key: key.into(), value }
}

pub fn num(x: f64) -> TelemetryValue {
    TelemetryValue::Number(x)
}

pub fn text(s: &str) -> TelemetryValue {
    TelemetryValue::Text(s.into())
}

/// Brute-force window scan, written without the library's helpers.
pub fn window_scan(records: &[(String, DataRecord)], samples: &[TelemetrySample], tol_s: f64) -> Vec<Verdict> {
    records
        .iter()
        .map(|(key, r)| {
            let mut any = false;
            let mut equal = false;
            for s in samples {
                let dt = (s.timestamp as i128 - r.recorded_at as i128).abs() as f64 / 1000.0;
                if &s.key != key || dt > tol_s {
                    continue;
                }
                any = true;
                equal |= match (&r.value, &s.value) {
                    (Value::Number(a), TelemetryValue::Number(b)) => {
                        let a = a.as_f64().unwrap();
                        a == *b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
                    }
                    (Value::String(a), TelemetryValue::Text(b)) => a.to_lowercase() == b.to_lowercase(),
                    _ => false,
                };
            }
            match (any, equal) {
                (false, _) => Verdict::Unmatched,
                (true, true) => Verdict::Agree,
                (true, false) => Verdict::Disagree,
            }
        })
        .collect()
}

