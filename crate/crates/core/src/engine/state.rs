use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::data::check_value;
use super::{
    DataRecord, EngineError, EventKind, EventRecord, IssueReport, IssueSeverity, TaskStatus, Timestamp,
};
use crate::model::{
    ConditionKind, DataSpec, Priority, Responsible, StepType, TaskGraph, TaskNode, MACHINE_ROLE, MISSION_COMMANDER,
};
use crate::text::normalize_condition;

/// Fields of an issue as submitted by a tester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueInput {
    #[serde(default)]
    pub task_id: Option<String>,
    pub reporter: String,
    pub severity: IssueSeverity,
    pub text: String,
}

/// One entry of a role's task list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub status: TaskStatus,
    pub priority: Priority,
    pub phase: String,
    pub responsible: String,
    pub given: Vec<String>,
    pub when: String,
    pub then: Vec<String>,
    pub step_type: StepType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Timestamp>,
    pub alarmed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_spec: Option<DataSpec>,
}

/// The runtime state of one mission. Cloning is cheap enough to hand out
/// snapshots; the graph itself is shared.
#[derive(Debug, Clone)]
pub struct MissionState {
    mission_id: String,
    graph: Arc<TaskGraph>,
    /// Graph tasks followed by retried copies.
    tasks: Vec<TaskNode>,
    index: BTreeMap<String, usize>,
    status: Vec<TaskStatus>,
    bindings: BTreeMap<String, String>,
    actors: BTreeSet<String>,
    satisfied: BTreeSet<String>,
    clock: Timestamp,
    started_at: BTreeMap<String, Timestamp>,
    deadlines: BTreeMap<String, Timestamp>,
    alarmed: BTreeSet<String>,
    priorities: BTreeMap<String, Priority>,
    notes: BTreeMap<String, String>,
    data: Vec<DataRecord>,
    issues: Vec<IssueReport>,
    events: Vec<EventRecord>,
    closed: bool,
}

fn str_field<'a>(ev: &'a EventRecord, key: &str) -> Result<&'a str, EngineError> {
    ev.payload.get(key).and_then(Value::as_str).ok_or_else(|| EngineError::CorruptLog {
        seq: ev.seq,
        reason: format!("{} event lacks `{key}`", ev.kind),
    })
}

impl MissionState {
    /// Validates bindings and builds the initial state, before any event.
    fn begin(mission_id: &str, graph: Arc<TaskGraph>, bindings: BTreeMap<String, String>) -> Result<Self, EngineError> {
        let missing: Vec<String> =
            graph.bindings_required().into_iter().filter(|k| !bindings.contains_key(k)).collect();
        if !missing.is_empty() {
            return Err(EngineError::MissingBinding(missing));
        }
        if let Some(target) = bindings.values().find(|v| !graph.actors.contains(v)) {
            return Err(EngineError::UnknownActor(target.clone()));
        }
        let mut actors: BTreeSet<String> = graph.actors.iter().cloned().collect();
        actors.insert(MACHINE_ROLE.to_string());
        actors.insert(MISSION_COMMANDER.to_string());
        let tasks = graph.tasks.clone();
        let index = tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        Ok(MissionState {
            mission_id: mission_id.to_string(),
            status: vec![TaskStatus::Pending; tasks.len()],
            tasks,
            index,
            graph,
            bindings,
            actors,
            satisfied: BTreeSet::new(),
            clock: 0,
            started_at: BTreeMap::new(),
            deadlines: BTreeMap::new(),
            alarmed: BTreeSet::new(),
            priorities: BTreeMap::new(),
            notes: BTreeMap::new(),
            data: Vec::new(),
            issues: Vec::new(),
            events: Vec::new(),
            closed: false,
        })
    }

    pub fn start_mission(
        mission_id: &str,
        graph: TaskGraph,
        bindings: BTreeMap<String, String>,
        timestamp: Timestamp,
    ) -> Result<Self, EngineError> {
        Self::start_shared(mission_id, Arc::new(graph), bindings, timestamp)
    }

    pub fn start_shared(
        mission_id: &str,
        graph: Arc<TaskGraph>,
        bindings: BTreeMap<String, String>,
        timestamp: Timestamp,
    ) -> Result<Self, EngineError> {
        let mut state = Self::begin(mission_id, graph, bindings)?;
        let event = EventRecord {
            seq: 1,
            timestamp,
            kind: EventKind::MissionStarted,
            task_id: None,
            actor: MISSION_COMMANDER.to_string(),
            payload: state.start_payload(),
        };
        state.apply_event(&event)?;
        Ok(state)
    }

    fn start_payload(&self) -> Value {
        json!({
            "mission_id": self.mission_id,
            "mission_template_id": self.graph.mission_template_id,
            "bindings": self.bindings,
        })
    }

    /// Rebuilds the state a `mission_started` event describes.
    pub(crate) fn from_start_event(graph: Arc<TaskGraph>, ev: &EventRecord) -> Result<Self, EngineError> {
        let corrupt = |reason: &str| EngineError::CorruptLog { seq: ev.seq, reason: reason.to_string() };
        if ev.kind != EventKind::MissionStarted || ev.seq != 1 {
            return Err(corrupt("log must begin with mission_started at seq 1"));
        }
        let mission_id = str_field(ev, "mission_id")?;
        if str_field(ev, "mission_template_id")? != graph.mission_template_id {
            return Err(corrupt("log belongs to a different mission template"));
        }
        let bindings: BTreeMap<String, String> = ev
            .payload
            .get("bindings")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| corrupt(&format!("bad bindings: {e}")))?
            .unwrap_or_default();
        let mut state = Self::begin(mission_id, graph, bindings)?;
        state.apply_event(ev)?;
        Ok(state)
    }

    // ---- reads -------------------------------------------------------------

    pub fn mission_id(&self) -> &str {
        &self.mission_id
    }

    pub fn graph(&self) -> &TaskGraph {
        &self.graph
    }

    pub fn shared_graph(&self) -> Arc<TaskGraph> {
        Arc::clone(&self.graph)
    }

    /// Graph tasks plus retried copies.
    pub fn tasks(&self) -> &[TaskNode] {
        &self.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskNode> {
        self.index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn status(&self, task_id: &str) -> Option<TaskStatus> {
        self.index.get(task_id).map(|&i| self.status[i])
    }

    pub fn statuses(&self) -> impl Iterator<Item = (&TaskNode, TaskStatus)> {
        self.tasks.iter().zip(self.status.iter().copied())
    }

    pub fn count(&self, status: TaskStatus) -> usize {
        self.status.iter().filter(|s| **s == status).count()
    }

    pub fn bindings(&self) -> &BTreeMap<String, String> {
        &self.bindings
    }

    pub fn satisfied(&self) -> &BTreeSet<String> {
        &self.satisfied
    }

    pub fn clock(&self) -> Timestamp {
        self.clock
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn data(&self) -> &[DataRecord] {
        &self.data
    }

    pub fn issues(&self) -> &[IssueReport] {
        &self.issues
    }

    pub fn note(&self, task_id: &str) -> Option<&str> {
        self.notes.get(task_id).map(String::as_str)
    }

    pub fn deadline(&self, task_id: &str) -> Option<Timestamp> {
        self.deadlines.get(task_id).copied()
    }

    pub fn alarmed(&self, task_id: &str) -> bool {
        self.alarmed.contains(task_id)
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Every task has reached a terminal status.
    pub fn is_closeable(&self) -> bool {
        self.status.iter().all(|s| s.is_terminal())
    }

    pub fn priority(&self, task_id: &str) -> Option<Priority> {
        self.priorities.get(task_id).copied().or_else(|| self.task(task_id).map(|t| t.priority))
    }

    /// Everyone who may act in this mission.
    pub fn actors(&self) -> &BTreeSet<String> {
        &self.actors
    }

    /// The concrete actor behind a responsible expression.
    pub fn resolve(&self, responsible: &Responsible) -> String {
        match responsible {
            Responsible::Role(r) => r.clone(),
            Responsible::Binding(key) => self.bindings.get(key).cloned().unwrap_or_else(|| responsible.to_string()),
        }
    }

    pub fn responsible_of(&self, task_id: &str) -> Option<String> {
        self.task(task_id).map(|t| self.resolve(&t.responsible))
    }

    /// Available and in-progress tasks of `role`, most urgent first.
    pub fn view_tasks(&self, role: &str) -> Result<Vec<TaskView>, EngineError> {
        if !self.actors.contains(role) {
            return Err(EngineError::UnknownRole(role.to_string()));
        }
        let mut out: Vec<TaskView> = self
            .statuses()
            .filter(|(_, s)| matches!(s, TaskStatus::Available | TaskStatus::InProgress))
            .filter(|(t, _)| self.resolve(&t.responsible) == role)
            .map(|(t, status)| TaskView {
                task_id: t.task_id.clone(),
                status,
                priority: self.priority(&t.task_id).unwrap_or_default(),
                phase: t.phase.clone(),
                responsible: role.to_string(),
                given: t.given.clone(),
                when: t.when.clone(),
                then: t.then.clone(),
                step_type: t.step_type,
                duration_limit: t.duration_limit,
                started_at: self.started_at.get(&t.task_id).copied(),
                deadline: self.deadline(&t.task_id),
                alarmed: self.alarmed(&t.task_id),
                data_spec: t.data_spec.clone(),
            })
            .collect();
        out.sort_by(|a, b| {
            (a.priority, self.graph.phase_index(&a.phase), &a.task_id)
                .cmp(&(b.priority, self.graph.phase_index(&b.phase), &b.task_id))
        });
        Ok(out)
    }

    /// Hex SHA-256 over a canonical rendering of the whole state.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            mission_id: &'a str,
            mission_template_id: &'a str,
            bindings: &'a BTreeMap<String, String>,
            status: Vec<(&'a str, TaskStatus)>,
            copies: &'a [TaskNode],
            satisfied: &'a BTreeSet<String>,
            clock: Timestamp,
            started_at: &'a BTreeMap<String, Timestamp>,
            deadlines: &'a BTreeMap<String, Timestamp>,
            alarmed: &'a BTreeSet<String>,
            priorities: &'a BTreeMap<String, Priority>,
            notes: &'a BTreeMap<String, String>,
            data: &'a [DataRecord],
            issues: &'a [IssueReport],
            last_seq: u64,
            closed: bool,
        }
        let snapshot = Snapshot {
            mission_id: &self.mission_id,
            mission_template_id: &self.graph.mission_template_id,
            bindings: &self.bindings,
            status: self.statuses().map(|(t, s)| (t.task_id.as_str(), s)).collect(),
            copies: &self.tasks[self.graph.tasks.len()..],
            satisfied: &self.satisfied,
            clock: self.clock,
            started_at: &self.started_at,
            deadlines: &self.deadlines,
            alarmed: &self.alarmed,
            priorities: &self.priorities,
            notes: &self.notes,
            data: &self.data,
            issues: &self.issues,
            last_seq: self.last_seq(),
            closed: self.closed,
        };
        let bytes = serde_json::to_vec(&snapshot).expect("snapshot serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    // ---- commands ----------------------------------------------------------

    fn commit(
        &mut self,
        kind: EventKind,
        task_id: Option<&str>,
        actor: &str,
        timestamp: Timestamp,
        payload: Value,
    ) -> Result<EventRecord, EngineError> {
        let event = EventRecord {
            seq: self.last_seq() + 1,
            timestamp,
            kind,
            task_id: task_id.map(str::to_string),
            actor: actor.to_string(),
            payload,
        };
        self.apply_event(&event)?;
        Ok(event)
    }

    fn condition_id(raw: &str) -> Result<String, EngineError> {
        normalize_condition(raw).map_err(|e| EngineError::InvalidCondition(e.to_string()))
    }

    /// Confirms an external condition. Repeating a confirmation only logs a
    /// warning event.
    pub fn confirm_condition(&mut self, condition: &str, actor: &str, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        let id = Self::condition_id(condition)?;
        self.precheck(actor, timestamp)?;
        let decl = self.graph.condition(&id).ok_or_else(|| EngineError::UnknownCondition(id.clone()))?;
        if decl.kind != ConditionKind::External {
            return Err(EngineError::InternalCondition(id));
        }
        let event = if self.satisfied.contains(&id) {
            self.commit(
                EventKind::Warning,
                None,
                actor,
                timestamp,
                json!({ "condition": id, "message": "condition already confirmed" }),
            )?
        } else {
            self.commit(EventKind::ConditionConfirmed, None, actor, timestamp, json!({ "condition": id }))?
        };
        Ok(vec![event])
    }

    /// Commander override: satisfies any condition, internal ones included.
    pub fn override_condition(&mut self, condition: &str, actor: &str, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        let id = Self::condition_id(condition)?;
        Ok(vec![self.commit(EventKind::ConditionOverridden, None, actor, timestamp, json!({ "condition": id }))?])
    }

    pub fn start_task(&mut self, task_id: &str, actor: &str, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        Ok(vec![self.commit(EventKind::TaskStarted, Some(task_id), actor, timestamp, json!({}))?])
    }

    pub fn complete_task(&mut self, task_id: &str, actor: &str, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        Ok(vec![self.commit(EventKind::TaskCompleted, Some(task_id), actor, timestamp, json!({}))?])
    }

    pub fn fail_task(&mut self, task_id: &str, actor: &str, timestamp: Timestamp, note: &str) -> Result<Vec<EventRecord>, EngineError> {
        Ok(vec![self.commit(EventKind::TaskFailed, Some(task_id), actor, timestamp, json!({ "note": note }))?])
    }

    pub fn skip_task(
        &mut self,
        task_id: &str,
        actor: &str,
        timestamp: Timestamp,
        note: Option<&str>,
    ) -> Result<Vec<EventRecord>, EngineError> {
        let payload = match note {
            Some(n) => json!({ "note": n }),
            None => json!({}),
        };
        Ok(vec![self.commit(EventKind::TaskSkipped, Some(task_id), actor, timestamp, payload)?])
    }

    /// Re-instantiates a failed or skipped task as a fresh pending copy.
    pub fn retry_task(&mut self, task_id: &str, actor: &str, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        let base = task_id.split('~').next().unwrap_or(task_id);
        let n = (2..).find(|n| !self.index.contains_key(&format!("{base}~{n}"))).unwrap_or(2);
        let copy = format!("{base}~{n}");
        Ok(vec![self.commit(EventKind::TaskRetried, Some(task_id), actor, timestamp, json!({ "new_task_id": copy }))?])
    }

    pub fn reprioritize(
        &mut self,
        task_id: &str,
        priority: Priority,
        actor: &str,
        timestamp: Timestamp,
    ) -> Result<Vec<EventRecord>, EngineError> {
        Ok(vec![self.commit(
            EventKind::TaskReprioritized,
            Some(task_id),
            actor,
            timestamp,
            json!({ "priority": priority.get() }),
        )?])
    }

    pub fn record_data(
        &mut self,
        task_id: &str,
        value: Value,
        actor: &str,
        timestamp: Timestamp,
    ) -> Result<Vec<EventRecord>, EngineError> {
        Ok(vec![self.commit(EventKind::DataRecorded, Some(task_id), actor, timestamp, json!({ "value": value }))?])
    }

    pub fn report_issue(&mut self, issue: IssueInput, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        let issue_id = format!("I{}", self.issues.len() + 1);
        let payload = json!({
            "issue_id": issue_id,
            "severity": issue.severity,
            "text": issue.text,
        });
        Ok(vec![self.commit(EventKind::IssueReported, issue.task_id.as_deref(), &issue.reporter, timestamp, payload)?])
    }

    /// Fires one `duration_exceeded` per overdue, not yet alarmed task.
    pub fn tick(&mut self, now: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        if now < self.clock {
            return Err(EngineError::ClockRegression { now, clock: self.clock });
        }
        if self.closed {
            return Ok(Vec::new());
        }
        let mut due: Vec<(Timestamp, String)> = self
            .deadlines
            .iter()
            .filter(|(t, d)| **d <= now && !self.alarmed.contains(*t))
            .map(|(t, d)| (*d, t.clone()))
            .collect();
        due.sort();
        let mut out = Vec::new();
        for (deadline, task_id) in due {
            let responsible = self.responsible_of(&task_id).unwrap_or_default();
            out.push(self.commit(
                EventKind::DurationExceeded,
                Some(&task_id),
                &responsible,
                now,
                json!({ "deadline": deadline, "responsible": responsible }),
            )?);
        }
        Ok(out)
    }

    pub fn close(&mut self, actor: &str, timestamp: Timestamp) -> Result<Vec<EventRecord>, EngineError> {
        let payload = json!({ "complete": self.is_closeable() });
        Ok(vec![self.commit(EventKind::MissionClosed, None, actor, timestamp, payload)?])
    }

    fn precheck(&self, actor: &str, timestamp: Timestamp) -> Result<(), EngineError> {
        if self.closed {
            return Err(EngineError::MissionClosed);
        }
        if timestamp < self.clock {
            return Err(EngineError::ClockRegression { now: timestamp, clock: self.clock });
        }
        if !self.actors.contains(actor) {
            return Err(EngineError::UnknownActor(actor.to_string()));
        }
        Ok(())
    }

    // ---- event application -------------------------------------------------

    fn task_index(&self, ev: &EventRecord) -> Result<usize, EngineError> {
        let id = ev.task_id.as_deref().ok_or_else(|| EngineError::CorruptLog {
            seq: ev.seq,
            reason: format!("{} event lacks a task id", ev.kind),
        })?;
        self.index.get(id).copied().ok_or_else(|| EngineError::UnknownTask(id.to_string()))
    }

    fn require_status(&self, i: usize, allowed: &[TaskStatus], to: TaskStatus) -> Result<(), EngineError> {
        if allowed.contains(&self.status[i]) {
            Ok(())
        } else {
            Err(EngineError::IllegalTransition { task: self.tasks[i].task_id.clone(), from: self.status[i], to })
        }
    }

    fn require_responsible(&self, i: usize, actor: &str) -> Result<(), EngineError> {
        let responsible = self.resolve(&self.tasks[i].responsible);
        if responsible == actor {
            Ok(())
        } else {
            Err(EngineError::NotResponsible { task: self.tasks[i].task_id.clone(), responsible, actor: actor.to_string() })
        }
    }

    fn require_commander(actor: &str, what: &str) -> Result<(), EngineError> {
        if actor == MISSION_COMMANDER {
            Ok(())
        } else {
            Err(EngineError::CommanderOnly(what.to_string()))
        }
    }

    /// Validates `ev` against the current state and applies it. On error the
    /// state is unchanged.
    pub(crate) fn apply_event(&mut self, ev: &EventRecord) -> Result<(), EngineError> {
        let expected = self.last_seq() + 1;
        if ev.seq != expected {
            return Err(EngineError::MissingSeq(expected));
        }
        if ev.kind == EventKind::MissionStarted {
            if ev.seq != 1 {
                return Err(EngineError::CorruptLog { seq: ev.seq, reason: "second mission_started".into() });
            }
        } else {
            if self.events.is_empty() {
                return Err(EngineError::CorruptLog { seq: ev.seq, reason: "mission not started".into() });
            }
            self.precheck(&ev.actor, ev.timestamp)?;
        }

        match ev.kind {
            EventKind::MissionStarted | EventKind::Warning => {}
            EventKind::ConditionConfirmed => {
                let id = str_field(ev, "condition")?;
                let decl = self.graph.condition(id).ok_or_else(|| EngineError::UnknownCondition(id.to_string()))?;
                if decl.kind != ConditionKind::External {
                    return Err(EngineError::InternalCondition(id.to_string()));
                }
                self.satisfied.insert(id.to_string());
            }
            EventKind::ConditionOverridden => {
                Self::require_commander(&ev.actor, "override a condition")?;
                let id = str_field(ev, "condition")?;
                if self.graph.condition(id).is_none() {
                    return Err(EngineError::UnknownCondition(id.to_string()));
                }
                self.satisfied.insert(id.to_string());
            }
            EventKind::TaskStarted => {
                let i = self.task_index(ev)?;
                self.require_status(i, &[TaskStatus::Available], TaskStatus::InProgress)?;
                self.require_responsible(i, &ev.actor)?;
                let id = self.tasks[i].task_id.clone();
                if let Some(limit) = self.tasks[i].duration_limit {
                    self.deadlines.insert(id.clone(), ev.timestamp + limit * 1000);
                }
                self.started_at.insert(id, ev.timestamp);
                self.status[i] = TaskStatus::InProgress;
            }
            EventKind::TaskCompleted => {
                let i = self.task_index(ev)?;
                self.require_status(i, &[TaskStatus::InProgress], TaskStatus::Completed)?;
                self.require_responsible(i, &ev.actor)?;
                let id = self.tasks[i].task_id.clone();
                if self.tasks[i].step_type == StepType::DataCollection && !self.data.iter().any(|d| d.task_id == id) {
                    return Err(EngineError::DataRequired(id));
                }
                self.satisfied.extend(self.tasks[i].then.iter().cloned());
                self.deadlines.remove(&id);
                self.status[i] = TaskStatus::Completed;
            }
            EventKind::TaskFailed => {
                let i = self.task_index(ev)?;
                self.require_status(i, &[TaskStatus::InProgress], TaskStatus::Failed)?;
                self.require_responsible(i, &ev.actor)?;
                let note = ev.payload.get("note").and_then(Value::as_str).unwrap_or("").trim();
                if note.is_empty() {
                    return Err(EngineError::NoteRequired("fail a task".into()));
                }
                let id = self.tasks[i].task_id.clone();
                self.deadlines.remove(&id);
                self.notes.insert(id, note.to_string());
                self.status[i] = TaskStatus::Failed;
            }
            EventKind::TaskSkipped => {
                let i = self.task_index(ev)?;
                Self::require_commander(&ev.actor, "skip a task")?;
                self.require_status(i, &[TaskStatus::Pending, TaskStatus::Available], TaskStatus::Skipped)?;
                if let Some(note) = ev.payload.get("note").and_then(Value::as_str) {
                    self.notes.insert(self.tasks[i].task_id.clone(), note.to_string());
                }
                self.status[i] = TaskStatus::Skipped;
            }
            EventKind::TaskRetried => {
                let i = self.task_index(ev)?;
                Self::require_commander(&ev.actor, "retry a task")?;
                self.require_status(i, &[TaskStatus::Failed, TaskStatus::Skipped], TaskStatus::Pending)?;
                let copy_id = str_field(ev, "new_task_id")?.to_string();
                if self.index.contains_key(&copy_id) {
                    return Err(EngineError::CorruptLog { seq: ev.seq, reason: format!("task {copy_id} already exists") });
                }
                let mut copy = self.tasks[i].clone();
                copy.task_id = copy_id.clone();
                self.index.insert(copy_id, self.tasks.len());
                self.tasks.push(copy);
                self.status.push(TaskStatus::Pending);
            }
            EventKind::TaskReprioritized => {
                let i = self.task_index(ev)?;
                Self::require_commander(&ev.actor, "reprioritize a task")?;
                let p = ev
                    .payload
                    .get("priority")
                    .and_then(Value::as_u64)
                    .and_then(|p| u8::try_from(p).ok())
                    .and_then(Priority::new)
                    .ok_or_else(|| EngineError::TypeMismatch {
                        field: "priority".into(),
                        expected: "integer 1..5".into(),
                        got: ev.payload.get("priority").map_or("nothing".into(), ToString::to_string),
                    })?;
                self.priorities.insert(self.tasks[i].task_id.clone(), p);
            }
            EventKind::DataRecorded => {
                let i = self.task_index(ev)?;
                let task = &self.tasks[i];
                let spec = match (&task.step_type, &task.data_spec) {
                    (StepType::DataCollection, Some(spec)) => spec,
                    _ => return Err(EngineError::NotDataTask(task.task_id.clone())),
                };
                self.require_status(i, &[TaskStatus::InProgress], TaskStatus::InProgress)?;
                self.require_responsible(i, &ev.actor)?;
                let value = ev.payload.get("value").cloned().unwrap_or(Value::Null);
                let valid = check_value(spec, &value)?;
                self.data.push(DataRecord {
                    task_id: task.task_id.clone(),
                    field_name: spec.field_name.clone(),
                    value,
                    recorded_at: ev.timestamp,
                    recorded_by: ev.actor.clone(),
                    valid,
                    seq: ev.seq,
                });
            }
            EventKind::IssueReported => {
                let text = ev.payload.get("text").and_then(Value::as_str).unwrap_or("").trim().to_string();
                if text.is_empty() {
                    return Err(EngineError::EmptyIssue);
                }
                if let Some(id) = &ev.task_id {
                    if !self.index.contains_key(id) {
                        return Err(EngineError::UnknownTask(id.clone()));
                    }
                }
                let severity: IssueSeverity = ev
                    .payload
                    .get("severity")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .ok()
                    .flatten()
                    .ok_or_else(|| EngineError::CorruptLog { seq: ev.seq, reason: "issue without severity".into() })?;
                self.issues.push(IssueReport {
                    issue_id: str_field(ev, "issue_id")?.to_string(),
                    task_id: ev.task_id.clone(),
                    reporter: ev.actor.clone(),
                    severity,
                    text,
                    state_snapshot_ref: ev.seq - 1,
                    reported_at: ev.timestamp,
                });
            }
            EventKind::DurationExceeded => {
                let i = self.task_index(ev)?;
                let id = self.tasks[i].task_id.clone();
                self.require_status(i, &[TaskStatus::InProgress], TaskStatus::InProgress)?;
                match self.deadlines.get(&id) {
                    Some(d) if *d <= ev.timestamp && !self.alarmed.contains(&id) => {}
                    _ => {
                        return Err(EngineError::CorruptLog { seq: ev.seq, reason: format!("no due alarm for task {id}") })
                    }
                }
                self.alarmed.insert(id);
            }
            EventKind::MissionClosed => {
                Self::require_commander(&ev.actor, "close the mission")?;
                self.closed = true;
            }
        }

        self.refresh_availability();
        self.clock = self.clock.max(ev.timestamp);
        self.events.push(ev.clone());
        Ok(())
    }

    fn refresh_availability(&mut self) {
        for (i, task) in self.tasks.iter().enumerate() {
            if self.status[i] == TaskStatus::Pending && task.given.iter().all(|c| self.satisfied.contains(c)) {
                self.status[i] = TaskStatus::Available;
            }
        }
    }
}
