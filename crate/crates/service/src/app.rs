//! The mission registry behind the HTTP routes.
//!
//! Every mission has its own lock, so commands on one mission are applied
//! strictly one after another while missions progress independently. A
//! command runs against a copy of the state; only once its events are on
//! disk does the copy replace the live state.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use fits_core::analysis::{self, export_issues, ingest_telemetry, AnalysisReport, IssueExport, TelemetrySample};
use fits_core::engine::{
    parse_ndjson, replay, Clock, EngineError, EventKind, EventRecord, IssueInput, IssueSeverity, MissionState,
    TaskStatus, TaskView, Timestamp, WallClock,
};
use fits_core::model::Priority;
use fits_core::package::MissionPackage;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::{watch, Mutex};

use crate::error::{ApiError, ErrorKind};
use crate::store::Store;

/// Time source shared across request handlers.
pub trait ServiceClock: Send + Sync {
    fn now(&self) -> Timestamp;
}

impl ServiceClock for WallClock {
    fn now(&self) -> Timestamp {
        Clock::now(self)
    }
}

/// A settable clock for tests and demos.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn set(&self, t: Timestamp) {
        self.0.store(t, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: Timestamp) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl ServiceClock for ManualClock {
    fn now(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CreateMission {
    pub package: Value,
    #[serde(default)]
    pub bindings: BTreeMap<String, String>,
    #[serde(default)]
    pub mission_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    ConfirmCondition,
    OverrideCondition,
    StartTask,
    CompleteTask,
    FailTask,
    SkipTask,
    RetryTask,
    Reprioritize,
    RecordData,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CommandRequest {
    pub kind: CommandKind,
    pub actor: String,
    #[serde(default)]
    pub task_id: Option<String>,
    #[serde(default)]
    pub condition: Option<String>,
    #[serde(default)]
    pub value: Option<Value>,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub priority: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    /// Seq of the last event in the mission after the command.
    pub seq: u64,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionStatus {
    Open,
    Closed,
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEntry {
    pub mission_id: String,
    pub mission_template_id: String,
    pub name: String,
    pub package_path: String,
    pub status: MissionStatus,
    pub created_at: Timestamp,
    pub bindings: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSummary {
    #[serde(flatten)]
    pub entry: MissionEntry,
    pub last_seq: u64,
    pub clock: Timestamp,
    pub digest: String,
    pub closeable: bool,
    pub totals: BTreeMap<TaskStatus, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryReceipt {
    pub file: String,
    pub samples: usize,
    pub warnings: Vec<String>,
}

enum Slot {
    Live(MissionState),
    Corrupt(String),
}

struct Mission {
    entry: MissionEntry,
    slot: Mutex<Slot>,
    seq: watch::Sender<u64>,
    closed: AtomicBool,
}

impl Mission {
    fn new(entry: MissionEntry, slot: Slot) -> Arc<Self> {
        let (last, closed) = match &slot {
            Slot::Live(s) => (s.last_seq(), s.is_closed()),
            Slot::Corrupt(_) => (0, false),
        };
        Arc::new(Mission { entry, slot: Mutex::new(slot), seq: watch::channel(last).0, closed: AtomicBool::new(closed) })
    }
}

fn live<'a>(slot: &'a mut Slot, id: &str) -> Result<&'a mut MissionState, ApiError> {
    match slot {
        Slot::Live(state) => Ok(state),
        Slot::Corrupt(reason) => Err(ApiError::new(ErrorKind::Internal, "corrupt_log", format!("mission {id} is quarantined: {reason}"))),
    }
}

pub struct Service {
    store: Store,
    clock: Arc<dyn ServiceClock>,
    default_tolerance: f64,
    missions: RwLock<BTreeMap<String, Arc<Mission>>>,
}

impl Service {
    /// Loads every mission in the store by replaying its log. A mission
    /// whose package or log is unreadable is quarantined; the others load.
    pub fn recover(store: Store, clock: Arc<dyn ServiceClock>, default_tolerance: f64) -> std::io::Result<Self> {
        let mut missions = BTreeMap::new();
        for id in store.mission_ids()? {
            let mission = load_mission(&store, &id);
            if let (Slot::Corrupt(reason), None) = (&mission.1, store.quarantine_reason(&id)) {
                store.quarantine(&id, reason)?;
            }
            missions.insert(id, Mission::new(mission.0, mission.1));
        }
        Ok(Service { store, clock, default_tolerance, missions: RwLock::new(missions) })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn default_tolerance(&self) -> f64 {
        self.default_tolerance
    }

    fn get(&self, id: &str) -> Result<Arc<Mission>, ApiError> {
        self.missions.read().expect("registry lock").get(id).cloned().ok_or_else(|| ApiError::unknown_mission(id))
    }

    fn now_for(&self, state: &MissionState) -> Timestamp {
        self.clock.now().max(state.clock())
    }

    pub fn create(&self, req: CreateMission) -> Result<MissionEntry, ApiError> {
        let package: MissionPackage = serde_json::from_value(req.package)
            .map_err(|e| ApiError::new(ErrorKind::Invalid, "invalid_package", e.to_string()))?;
        let package_json = package.to_json();
        // Re-parse to run the package validation.
        let package = MissionPackage::from_json(&package_json)
            .map_err(|e| ApiError::new(ErrorKind::Invalid, "invalid_package", e.to_string()))?;
        let graph = Arc::new(package.graph());

        let mut missions = self.missions.write().expect("registry lock");
        let id = match req.mission_id {
            Some(id) => {
                if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(ApiError::new(ErrorKind::Invalid, "invalid_mission_id", "mission ids use letters, digits, - and _"));
                }
                if missions.contains_key(&id) || self.store.mission_dir(&id).exists() {
                    return Err(ApiError::new(ErrorKind::Conflict, "mission_exists", format!("mission {id} already exists")));
                }
                id
            }
            None => {
                let stem: String = package
                    .mission_template_id
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
                    .collect();
                (1..)
                    .map(|n| format!("{stem}-{n:03}"))
                    .find(|id| !missions.contains_key(id) && !self.store.mission_dir(id).exists())
                    .expect("some id is free")
            }
        };
        let now = self.clock.now();
        let state = MissionState::start_shared(&id, graph, req.bindings, now)?;
        self.store.create(&id, &package_json, state.events()).map_err(ApiError::io)?;
        let entry = entry_for(&self.store, &id, &package, &state);
        missions.insert(id, Mission::new(entry.clone(), Slot::Live(state)));
        Ok(entry)
    }

    pub fn list(&self) -> Vec<MissionEntry> {
        let missions: Vec<Arc<Mission>> = self.missions.read().expect("registry lock").values().cloned().collect();
        missions.iter().map(|m| current_entry(m)).collect()
    }

    pub async fn summary(&self, id: &str) -> Result<MissionSummary, ApiError> {
        let m = self.get(id)?;
        let mut slot = m.slot.lock().await;
        let state = live(&mut slot, id)?;
        let mut entry = m.entry.clone();
        entry.status = if state.is_closed() { MissionStatus::Closed } else { MissionStatus::Open };
        Ok(MissionSummary {
            entry,
            last_seq: state.last_seq(),
            clock: state.clock(),
            digest: state.digest(),
            closeable: state.is_closeable(),
            totals: TaskStatus::ALL.iter().map(|s| (*s, state.count(*s))).collect(),
        })
    }

    pub async fn tasks(&self, id: &str, role: &str) -> Result<Vec<TaskView>, ApiError> {
        let m = self.get(id)?;
        let mut slot = m.slot.lock().await;
        Ok(live(&mut slot, id)?.view_tasks(role)?)
    }

    /// Applies `f` to a copy of the mission at the current time, after
    /// firing any alarms that are due, then persists and publishes.
    async fn mutate<F>(&self, id: &str, f: F) -> Result<CommandOutcome, ApiError>
    where
        F: FnOnce(&mut MissionState, Timestamp) -> Result<Vec<EventRecord>, EngineError>,
    {
        let m = self.get(id)?;
        let mut slot = m.slot.lock().await;
        let state = live(&mut slot, id)?;
        let now = self.now_for(state);
        let mut next = state.clone();
        let mut events = next.tick(now)?;
        events.extend(f(&mut next, now)?);
        self.store.append(id, &events).map_err(ApiError::io)?;
        *state = next;
        m.closed.store(state.is_closed(), Ordering::SeqCst);
        m.seq.send_replace(state.last_seq());
        Ok(CommandOutcome { seq: state.last_seq(), events })
    }

    pub async fn command(&self, id: &str, req: CommandRequest) -> Result<CommandOutcome, ApiError> {
        let task = || req.task_id.clone().ok_or_else(|| missing_field("task_id", req.kind));
        let actor = req.actor.clone();
        match req.kind {
            CommandKind::ConfirmCondition | CommandKind::OverrideCondition => {
                let condition = req.condition.clone().ok_or_else(|| missing_field("condition", req.kind))?;
                let confirm = req.kind == CommandKind::ConfirmCondition;
                self.mutate(id, move |s, t| {
                    if confirm {
                        s.confirm_condition(&condition, &actor, t)
                    } else {
                        s.override_condition(&condition, &actor, t)
                    }
                })
                .await
            }
            CommandKind::StartTask => {
                let task = task()?;
                self.mutate(id, move |s, t| s.start_task(&task, &actor, t)).await
            }
            CommandKind::CompleteTask => {
                let task = task()?;
                self.mutate(id, move |s, t| s.complete_task(&task, &actor, t)).await
            }
            CommandKind::FailTask => {
                let task = task()?;
                let note = req.note.clone().unwrap_or_default();
                self.mutate(id, move |s, t| s.fail_task(&task, &actor, t, &note)).await
            }
            CommandKind::SkipTask => {
                let task = task()?;
                let note = req.note.clone();
                self.mutate(id, move |s, t| s.skip_task(&task, &actor, t, note.as_deref())).await
            }
            CommandKind::RetryTask => {
                let task = task()?;
                self.mutate(id, move |s, t| s.retry_task(&task, &actor, t)).await
            }
            CommandKind::Reprioritize => {
                let task = task()?;
                let raw = req.priority.ok_or_else(|| missing_field("priority", req.kind))?;
                let priority = Priority::new(raw).ok_or_else(|| {
                    ApiError::new(ErrorKind::Invalid, "invalid_priority", format!("priority {raw} is outside 1..5"))
                })?;
                self.mutate(id, move |s, t| s.reprioritize(&task, priority, &actor, t)).await
            }
            CommandKind::RecordData => {
                let task = task()?;
                let value = req.value.clone().ok_or_else(|| missing_field("value", req.kind))?;
                self.mutate(id, move |s, t| s.record_data(&task, value, &actor, t)).await
            }
        }
    }

    pub async fn report_issue(&self, id: &str, issue: IssueInput) -> Result<CommandOutcome, ApiError> {
        self.mutate(id, move |s, t| s.report_issue(issue, t)).await
    }

    pub async fn close(&self, id: &str, actor: &str) -> Result<CommandOutcome, ApiError> {
        self.mutate(id, |s, t| s.close(actor, t)).await
    }

    /// Fires due alarms in every open mission; returns how many fired.
    pub async fn tick_all(&self) -> usize {
        let missions: Vec<(String, Arc<Mission>)> =
            self.missions.read().expect("registry lock").iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut fired = 0;
        for (id, m) in missions {
            let mut slot = m.slot.lock().await;
            let Slot::Live(state) = &mut *slot else { continue };
            if state.is_closed() {
                continue;
            }
            let mut next = state.clone();
            let now = self.now_for(state);
            let Ok(events) = next.tick(now) else { continue };
            if events.is_empty() || self.store.append(&id, &events).is_err() {
                continue;
            }
            fired += events.iter().filter(|e| e.kind == EventKind::DurationExceeded).count();
            *state = next;
            m.seq.send_replace(state.last_seq());
        }
        fired
    }

    /// Events with `seq > since`. With a `wait`, blocks until at least one
    /// such event exists or the wait elapses.
    pub async fn events(&self, id: &str, since: u64, wait: Duration) -> Result<Vec<EventRecord>, ApiError> {
        let m = self.get(id)?;
        let mut rx = m.seq.subscribe();
        let deadline = tokio::time::Instant::now() + wait;
        loop {
            {
                let mut slot = m.slot.lock().await;
                let state = live(&mut slot, id)?;
                let start = usize::try_from(since).unwrap_or(usize::MAX).min(state.events().len());
                let out = state.events()[start..].to_vec();
                if !out.is_empty() || tokio::time::Instant::now() >= deadline {
                    return Ok(out);
                }
            }
            if tokio::time::timeout_at(deadline, rx.changed()).await.is_err() {
                continue; // timed out: one last read
            }
        }
    }

    pub async fn upload_telemetry(&self, id: &str, name: &str, csv: &str) -> Result<TelemetryReceipt, ApiError> {
        let m = self.get(id)?;
        let _guard = m.slot.lock().await;
        let ingested = ingest_telemetry(csv, name)?;
        let file = self.store.save_telemetry(id, name, csv).map_err(ApiError::io)?;
        Ok(TelemetryReceipt { file, samples: ingested.samples.len(), warnings: ingested.warnings })
    }

    fn telemetry(&self, id: &str) -> Result<Vec<TelemetrySample>, ApiError> {
        let mut samples = Vec::new();
        for (name, content) in self.store.telemetry_files(id).map_err(ApiError::io)? {
            samples.extend(ingest_telemetry(&content, &name)?.samples);
        }
        samples.sort_by(|a, b| (a.timestamp, &a.source).cmp(&(b.timestamp, &b.source)));
        Ok(samples)
    }

    pub async fn report(&self, id: &str, tolerance_s: Option<f64>) -> Result<AnalysisReport, ApiError> {
        let tolerance = tolerance_s.unwrap_or(self.default_tolerance);
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(ApiError::new(ErrorKind::Invalid, "invalid_tolerance", "tolerance must be a non-negative number"));
        }
        let m = self.get(id)?;
        let mut slot = m.slot.lock().await;
        let state = live(&mut slot, id)?;
        let samples = self.telemetry(id)?;
        Ok(analysis::report_from_state(state, &samples, tolerance))
    }

    pub async fn export_issues(&self, id: &str) -> Result<Vec<IssueExport>, ApiError> {
        Ok(export_issues(&self.report(id, None).await?))
    }
}

fn missing_field(field: &str, kind: CommandKind) -> ApiError {
    let kind = serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    ApiError::malformed(format!("{kind} needs `{field}`")).with_detail(serde_json::json!({ "field": field }))
}

fn entry_for(store: &Store, id: &str, package: &MissionPackage, state: &MissionState) -> MissionEntry {
    MissionEntry {
        mission_id: id.to_string(),
        mission_template_id: package.mission_template_id.clone(),
        name: package.name.clone(),
        package_path: store.package_path(id).display().to_string(),
        status: if state.is_closed() { MissionStatus::Closed } else { MissionStatus::Open },
        created_at: state.events().first().map_or(0, |e| e.timestamp),
        bindings: state.bindings().clone(),
        error: None,
    }
}

fn current_entry(m: &Mission) -> MissionEntry {
    let mut entry = m.entry.clone();
    if entry.status != MissionStatus::Corrupt {
        entry.status = if m.closed.load(Ordering::SeqCst) { MissionStatus::Closed } else { MissionStatus::Open };
    }
    entry
}

fn load_mission(store: &Store, id: &str) -> (MissionEntry, Slot) {
    let corrupt = |reason: String| {
        let entry = MissionEntry {
            mission_id: id.to_string(),
            mission_template_id: String::new(),
            name: String::new(),
            package_path: store.package_path(id).display().to_string(),
            status: MissionStatus::Corrupt,
            created_at: 0,
            bindings: BTreeMap::new(),
            error: Some(reason.clone()),
        };
        (entry, Slot::Corrupt(reason))
    };
    if let Some(reason) = store.quarantine_reason(id) {
        return corrupt(reason);
    }
    let package = match store.read_package(id).map_err(|e| e.to_string()).and_then(|t| MissionPackage::from_json(&t).map_err(|e| e.to_string())) {
        Ok(p) => p,
        Err(e) => return corrupt(format!("package: {e}")),
    };
    let loaded = store
        .read_events(id)
        .map_err(|e| e.to_string())
        .and_then(|text| parse_ndjson(&text).map_err(|e| e.to_string()))
        .and_then(|events| {
            if events.is_empty() {
                return Err("empty event log".to_string());
            }
            replay(id, &events, Arc::new(package.graph()), &BTreeMap::new()).map_err(|e| e.to_string())
        });
    match loaded {
        Ok(state) => (entry_for(store, id, &package, &state), Slot::Live(state)),
        Err(reason) => {
            let (mut entry, slot) = corrupt(reason);
            entry.mission_template_id = package.mission_template_id.clone();
            entry.name = package.name.clone();
            (entry, slot)
        }
    }
}

/// Parses an issue severity the way the HTTP body spells it.
pub fn parse_severity(s: &str) -> Result<IssueSeverity, ApiError> {
    s.parse().map_err(|e: String| ApiError::new(ErrorKind::Invalid, "invalid_severity", e))
}

/// The route (relative to `/missions/{id}`) and JSON body that perform a
/// scripted action over HTTP. Clock actions have no HTTP form.
pub fn http_request_for(action: &fits_core::sim::Action) -> Option<(&'static str, Value)> {
    use fits_core::sim::Action::*;
    use serde_json::json;
    let cmd = |kind: &str, actor: &str, extra: Value| {
        let mut body = json!({ "kind": kind, "actor": actor });
        if let (Some(b), Value::Object(extra)) = (body.as_object_mut(), extra) {
            b.extend(extra);
        }
        Some(("/commands", body))
    };
    match action {
        Bind { .. } | Advance { .. } | Tick => None,
        Confirm { actor, condition } => cmd("confirm_condition", actor, json!({ "condition": condition })),
        Override { actor, condition } => cmd("override_condition", actor, json!({ "condition": condition })),
        Start { actor, task } => cmd("start_task", actor, json!({ "task_id": task })),
        Complete { actor, task } => cmd("complete_task", actor, json!({ "task_id": task })),
        Fail { actor, task, note } => cmd("fail_task", actor, json!({ "task_id": task, "note": note })),
        Skip { actor, task, note } => cmd("skip_task", actor, json!({ "task_id": task, "note": note })),
        Retry { actor, task } => cmd("retry_task", actor, json!({ "task_id": task })),
        Reprioritize { actor, task, priority } => {
            cmd("reprioritize", actor, json!({ "task_id": task, "priority": priority.get() }))
        }
        Record { actor, task, value } => cmd("record_data", actor, json!({ "task_id": task, "value": value })),
        Issue { actor, severity, task, text } => {
            Some(("/issues", json!({ "reporter": actor, "severity": severity, "task_id": task, "text": text })))
        }
        Close { actor } => Some(("/close", json!({ "actor": actor }))),
    }
}
