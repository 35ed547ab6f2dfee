//! Event-sourced mission execution.
//!
//! A [`MissionState`] changes only by appending [`EventRecord`]s; every
//! command validates its input, builds the event and applies it through the
//! same path [`replay`] uses, so a log always reproduces its state.
//!
//! Timestamps are milliseconds (wall clock: since the Unix epoch; logical
//! clock: since mission start).

mod data;
mod log;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::check_value;
pub use log::{parse_ndjson, replay, to_ndjson, write_ndjson_line};
pub use state::{IssueInput, MissionState, TaskView};

pub type Timestamp = u64;

/// Injected time source.
pub trait Clock {
    fn now(&self) -> Timestamp;
}

/// Milliseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, Default)]
pub struct WallClock;

impl Clock for WallClock {
    fn now(&self) -> Timestamp {
        chrono::Utc::now().timestamp_millis().max(0) as Timestamp
    }
}

/// A clock that only moves when told to; for simulation and tests.
#[derive(Debug, Default)]
pub struct LogicalClock(std::cell::Cell<Timestamp>);

impl LogicalClock {
    pub fn new(start: Timestamp) -> Self {
        LogicalClock(std::cell::Cell::new(start))
    }

    pub fn advance(&self, ms: Timestamp) {
        self.0.set(self.0.get() + ms);
    }

    pub fn set(&self, t: Timestamp) {
        self.0.set(t);
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> Timestamp {
        self.0.get()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Available,
    InProgress,
    Completed,
    Failed,
    Skipped,
}

impl TaskStatus {
    pub const ALL: [TaskStatus; 6] = [
        TaskStatus::Pending,
        TaskStatus::Available,
        TaskStatus::InProgress,
        TaskStatus::Completed,
        TaskStatus::Failed,
        TaskStatus::Skipped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Pending => "pending",
            TaskStatus::Available => "available",
            TaskStatus::InProgress => "in_progress",
            TaskStatus::Completed => "completed",
            TaskStatus::Failed => "failed",
            TaskStatus::Skipped => "skipped",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Completed | TaskStatus::Failed | TaskStatus::Skipped)
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    MissionStarted,
    ConditionConfirmed,
    /// Mission commander satisfies an internal condition by hand.
    ConditionOverridden,
    TaskStarted,
    TaskCompleted,
    TaskFailed,
    TaskSkipped,
    /// A fresh copy of a failed or skipped task.
    TaskRetried,
    TaskReprioritized,
    DataRecorded,
    IssueReported,
    DurationExceeded,
    /// Accepted but ineffective command, e.g. a repeated confirmation.
    Warning,
    MissionClosed,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::MissionStarted => "mission_started",
            EventKind::ConditionConfirmed => "condition_confirmed",
            EventKind::ConditionOverridden => "condition_overridden",
            EventKind::TaskStarted => "task_started",
            EventKind::TaskCompleted => "task_completed",
            EventKind::TaskFailed => "task_failed",
            EventKind::TaskSkipped => "task_skipped",
            EventKind::TaskRetried => "task_retried",
            EventKind::TaskReprioritized => "task_reprioritized",
            EventKind::DataRecorded => "data_recorded",
            EventKind::IssueReported => "issue_reported",
            EventKind::DurationExceeded => "duration_exceeded",
            EventKind::Warning => "warning",
            EventKind::MissionClosed => "mission_closed",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub actor: String,
    #[serde(default)]
    pub payload: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueSeverity {
    Info,
    Minor,
    Major,
    Blocker,
}

impl IssueSeverity {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueSeverity::Info => "info",
            IssueSeverity::Minor => "minor",
            IssueSeverity::Major => "major",
            IssueSeverity::Blocker => "blocker",
        }
    }
}

impl std::str::FromStr for IssueSeverity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "info" => Ok(IssueSeverity::Info),
            "minor" => Ok(IssueSeverity::Minor),
            "major" => Ok(IssueSeverity::Major),
            "blocker" => Ok(IssueSeverity::Blocker),
            other => Err(format!("unknown severity `{other}` (info, minor, major, blocker)")),
        }
    }
}

impl fmt::Display for IssueSeverity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueReport {
    pub issue_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    pub reporter: String,
    pub severity: IssueSeverity,
    pub text: String,
    /// Seq of the last event before the report.
    pub state_snapshot_ref: u64,
    pub reported_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub task_id: String,
    pub field_name: String,
    pub value: serde_json::Value,
    pub recorded_at: Timestamp,
    pub recorded_by: String,
    pub valid: bool,
    pub seq: u64,
}

/// How a caller should classify an engine error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    NotFound,
    Conflict,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("missing binding for {}", .0.join(", "))]
    MissingBinding(Vec<String>),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("unknown role {0}")]
    UnknownRole(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("condition `{0}` is internal; it is satisfied by completing its producing task")]
    InternalCondition(String),
    #[error("not responsible: task {task} belongs to {responsible}, not {actor}")]
    NotResponsible { task: String, responsible: String, actor: String },
    #[error("illegal transition for task {task}: {from} -> {to}")]
    IllegalTransition { task: String, from: TaskStatus, to: TaskStatus },
    #[error("only the mission commander may {0}")]
    CommanderOnly(String),
    #[error("a note is required to {0}")]
    NoteRequired(String),
    #[error("task {0} is not a data-collection (TD) task")]
    NotDataTask(String),
    #[error("TD task {0} needs recorded data before completion")]
    DataRequired(String),
    #[error("type mismatch for {field}: expected {expected}, got {got}")]
    TypeMismatch { field: String, expected: String, got: String },
    #[error("issue text is empty")]
    EmptyIssue,
    #[error("clock regression: {now} is before {clock}")]
    ClockRegression { now: Timestamp, clock: Timestamp },
    #[error("mission is closed")]
    MissionClosed,
    #[error("missing seq {0}")]
    MissingSeq(u64),
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("invalid condition text: {0}")]
    InvalidCondition(String),
}

impl EngineError {
    pub fn class(&self) -> ErrorClass {
        use EngineError::*;
        match self {
            UnknownTask(_) | UnknownCondition(_) => ErrorClass::NotFound,
            IllegalTransition { .. } | MissionClosed | ClockRegression { .. } => ErrorClass::Conflict,
            _ => ErrorClass::Invalid,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        use EngineError::*;
        match self {
            MissingBinding(_) => "missing_binding",
            UnknownActor(_) => "unknown_actor",
            UnknownRole(_) => "unknown_role",
            UnknownTask(_) => "unknown_task",
            UnknownCondition(_) => "unknown_condition",
            InternalCondition(_) => "internal_condition",
            NotResponsible { .. } => "not_responsible",
            IllegalTransition { .. } => "illegal_transition",
            CommanderOnly(_) => "commander_only",
            NoteRequired(_) => "note_required",
            NotDataTask(_) => "not_data_task",
            DataRequired(_) => "data_required",
            TypeMismatch { .. } => "type_mismatch",
            EmptyIssue => "empty_issue",
            ClockRegression { .. } => "clock_regression",
            MissionClosed => "mission_closed",
            MissingSeq(_) => "missing_seq",
            CorruptLog { .. } => "corrupt_log",
            InvalidCondition(_) => "invalid_condition",
        }
    }
}
