//! Simulation scripts: a scripted field procedure replayed on the engine with
//! a logical clock.
//!
//! ```text
//! bind sUAS_1 pilot_1
//! confirm pilot_1 "sUAS1 is available at test site"
//! start pilot_1 11.1
//! advance 30s
//! complete pilot_1 11.1
//! record pilot_1 P3 4.5
//! issue pilot_1 major task 12.2.1 "arming failed, retried"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde_json::Value;
use thiserror::Error;

use crate::dsl::clauses::{parse_duration, quote, take_quoted};
use crate::engine::{EngineError, EventRecord, IssueInput, IssueSeverity, MissionState, TaskStatus, Timestamp};
use crate::model::{ConditionKind, DataSpec, DataType, Priority, StepType, TaskGraph, Validation, MISSION_COMMANDER};

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Bind { key: String, actor: String },
    /// Moves the logical clock forward and fires due alarms.
    Advance { seconds: u64 },
    Tick,
    Confirm { actor: String, condition: String },
    Override { actor: String, condition: String },
    Start { actor: String, task: String },
    Complete { actor: String, task: String },
    Fail { actor: String, task: String, note: String },
    Skip { actor: String, task: String, note: Option<String> },
    Retry { actor: String, task: String },
    Reprioritize { actor: String, task: String, priority: Priority },
    Record { actor: String, task: String, value: Value },
    Issue { actor: String, severity: IssueSeverity, task: Option<String>, text: String },
    Close { actor: String },
}

fn word(s: &str) -> String {
    if !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || c == '"' || c == '#') {
        s.to_string()
    } else {
        quote(s)
    }
}

fn value_token(v: &Value) -> String {
    match v {
        Value::String(s) => quote(s),
        other => other.to_string(),
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Action::*;
        match self {
            Bind { key, actor } => write!(f, "bind {} {}", word(key), word(actor)),
            Advance { seconds } => write!(f, "advance {seconds}"),
            Tick => f.write_str("tick"),
            Confirm { actor, condition } => write!(f, "confirm {} {}", word(actor), quote(condition)),
            Override { actor, condition } => write!(f, "override {} {}", word(actor), quote(condition)),
            Start { actor, task } => write!(f, "start {} {}", word(actor), word(task)),
            Complete { actor, task } => write!(f, "complete {} {}", word(actor), word(task)),
            Fail { actor, task, note } => write!(f, "fail {} {} {}", word(actor), word(task), quote(note)),
            Skip { actor, task, note: None } => write!(f, "skip {} {}", word(actor), word(task)),
            Skip { actor, task, note: Some(n) } => write!(f, "skip {} {} {}", word(actor), word(task), quote(n)),
            Retry { actor, task } => write!(f, "retry {} {}", word(actor), word(task)),
            Reprioritize { actor, task, priority } => write!(f, "reprioritize {} {} {priority}", word(actor), word(task)),
            Record { actor, task, value } => write!(f, "record {} {} {}", word(actor), word(task), value_token(value)),
            Issue { actor, severity, task, text } => {
                write!(f, "issue {} {severity}", word(actor))?;
                if let Some(t) = task {
                    write!(f, " task {}", word(t))?;
                }
                write!(f, " {}", quote(text))
            }
            Close { actor } => write!(f, "close {}", word(actor)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptLine {
    pub line: usize,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    pub lines: Vec<ScriptLine>,
}

impl Script {
    pub fn push(&mut self, action: Action) {
        let line = self.lines.len() + 1;
        self.lines.push(ScriptLine { line, action });
    }

    /// `bind` lines as a binding map.
    pub fn bindings(&self) -> BTreeMap<String, String> {
        self.lines
            .iter()
            .filter_map(|l| match &l.action {
                Action::Bind { key, actor } => Some((key.clone(), actor.clone())),
                _ => None,
            })
            .collect()
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{}", l.action)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {action}: {source}")]
    Rejected { line: usize, action: String, source: EngineError },
    #[error("cannot start mission: {0}")]
    Start(EngineError),
}

struct Token {
    text: String,
    quoted: bool,
}

fn tokenize(line: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut rest = line.trim_start();
    while !rest.is_empty() {
        if rest.starts_with('#') {
            break;
        }
        if rest.starts_with('"') {
            let (text, after) = take_quoted(rest).ok_or("unterminated string")?;
            out.push(Token { text, quoted: true });
            rest = after.trim_start();
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push(Token { text: rest[..end].to_string(), quoted: false });
            rest = rest[end..].trim_start();
        }
    }
    Ok(out)
}

pub fn parse_script(source: &str) -> Result<Script, ScriptError> {
    let mut script = Script::default();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ScriptError::Syntax { line, message };
        let tokens = tokenize(raw).map_err(|m| err(m.to_string()))?;
        let Some((verb, args)) = tokens.split_first() else { continue };
        let arg = |n: usize, what: &str| -> Result<String, ScriptError> {
            args.get(n).map(|t| t.text.clone()).ok_or_else(|| err(format!("`{}` needs {what}", verb.text)))
        };
        let arity = |max: usize| -> Result<(), ScriptError> {
            if args.len() > max {
                Err(err(format!("too many arguments for `{}`", verb.text)))
            } else {
                Ok(())
            }
        };
        let action = match verb.text.as_str() {
            "bind" => {
                arity(2)?;
                Action::Bind { key: arg(0, "a binding key")?, actor: arg(1, "an actor")? }
            }
            "advance" => {
                let text: Vec<&str> = args.iter().map(|t| t.text.as_str()).collect();
                let seconds = parse_duration(&text.join(" ")).map_err(err)?;
                Action::Advance { seconds }
            }
            "tick" => {
                arity(0)?;
                Action::Tick
            }
            "confirm" | "override" => {
                arity(2)?;
                let (actor, condition) = (arg(0, "an actor")?, arg(1, "a condition")?);
                if verb.text == "confirm" {
                    Action::Confirm { actor, condition }
                } else {
                    Action::Override { actor, condition }
                }
            }
            "start" | "complete" | "retry" => {
                arity(2)?;
                let (actor, task) = (arg(0, "an actor")?, arg(1, "a task id")?);
                match verb.text.as_str() {
                    "start" => Action::Start { actor, task },
                    "complete" => Action::Complete { actor, task },
                    _ => Action::Retry { actor, task },
                }
            }
            "fail" => {
                arity(3)?;
                Action::Fail { actor: arg(0, "an actor")?, task: arg(1, "a task id")?, note: arg(2, "a note")? }
            }
            "skip" => {
                arity(3)?;
                Action::Skip { actor: arg(0, "an actor")?, task: arg(1, "a task id")?, note: args.get(2).map(|t| t.text.clone()) }
            }
            "reprioritize" => {
                arity(3)?;
                let p = arg(2, "a priority")?;
                let priority = p.parse::<u8>().ok().and_then(Priority::new).ok_or_else(|| err(format!("priority `{p}` must be 1..5")))?;
                Action::Reprioritize { actor: arg(0, "an actor")?, task: arg(1, "a task id")?, priority }
            }
            "record" => {
                arity(3)?;
                let token = args.get(2).ok_or_else(|| err("`record` needs a value".into()))?;
                let value = if token.quoted {
                    Value::String(token.text.clone())
                } else {
                    serde_json::from_str(&token.text).unwrap_or_else(|_| Value::String(token.text.clone()))
                };
                Action::Record { actor: arg(0, "an actor")?, task: arg(1, "a task id")?, value }
            }
            "issue" => {
                let actor = arg(0, "an actor")?;
                let severity: IssueSeverity = arg(1, "a severity")?.parse().map_err(err)?;
                let (task, text_at) = if args.get(2).is_some_and(|t| !t.quoted && t.text == "task") {
                    (Some(arg(3, "a task id")?), 4)
                } else {
                    (None, 2)
                };
                arity(text_at + 1)?;
                Action::Issue { actor, severity, task, text: arg(text_at, "a text")? }
            }
            "close" => {
                arity(1)?;
                Action::Close { actor: arg(0, "an actor")? }
            }
            other => return Err(err(format!("unknown action `{other}`"))),
        };
        script.lines.push(ScriptLine { line, action });
    }
    Ok(script)
}

/// Runs `script` on a fresh mission. The logical clock starts at 0 and only
/// `advance` moves it. Stops at the first rejected action.
pub fn run_script(
    mission_id: &str,
    graph: Arc<TaskGraph>,
    extra_bindings: &BTreeMap<String, String>,
    script: &Script,
) -> Result<MissionState, (Option<MissionState>, ScriptError)> {
    let mut bindings = script.bindings();
    bindings.extend(extra_bindings.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut state =
        MissionState::start_shared(mission_id, graph, bindings, 0).map_err(|e| (None, ScriptError::Start(e)))?;
    let mut now: Timestamp = 0;
    for l in &script.lines {
        let result = apply_action(&mut state, &l.action, &mut now);
        if let Err(source) = result {
            let err = ScriptError::Rejected { line: l.line, action: l.action.to_string(), source };
            return Err((Some(state), err));
        }
    }
    Ok(state)
}

/// Applies one action at `*now`; `advance` moves `*now` and ticks.
pub fn apply_action(state: &mut MissionState, action: &Action, now: &mut Timestamp) -> Result<Vec<EventRecord>, EngineError> {
    let now_ms = *now;
    match action {
        Action::Bind { .. } => Ok(Vec::new()),
        Action::Advance { seconds } => {
            *now += seconds * 1000;
            state.tick(*now)
        }
        Action::Tick => state.tick(now_ms),
        Action::Confirm { actor, condition } => state.confirm_condition(condition, actor, now_ms),
        Action::Override { actor, condition } => state.override_condition(condition, actor, now_ms),
        Action::Start { actor, task } => state.start_task(task, actor, now_ms),
        Action::Complete { actor, task } => state.complete_task(task, actor, now_ms),
        Action::Fail { actor, task, note } => state.fail_task(task, actor, now_ms, note),
        Action::Skip { actor, task, note } => state.skip_task(task, actor, now_ms, note.as_deref()),
        Action::Retry { actor, task } => state.retry_task(task, actor, now_ms),
        Action::Reprioritize { actor, task, priority } => state.reprioritize(task, *priority, actor, now_ms),
        Action::Record { actor, task, value } => state.record_data(task, value.clone(), actor, now_ms),
        Action::Issue { actor, severity, task, text } => state.report_issue(
            IssueInput { task_id: task.clone(), reporter: actor.clone(), severity: *severity, text: text.clone() },
            now_ms,
        ),
        Action::Close { actor } => state.close(actor, now_ms),
    }
}

/// A value that passes `spec`'s validation.
pub fn valid_value(spec: &DataSpec) -> Value {
    let (lo, hi) = match &spec.validation {
        Some(Validation::Range { min, max }) => (*min, *max),
        _ => (0.0, 0.0),
    };
    match &spec.datatype {
        DataType::Number => serde_json::json!((lo + hi) / 2.0),
        DataType::Integer => serde_json::json!(((lo + hi) / 2.0).round().clamp(lo.ceil(), hi.floor()) as i64),
        DataType::Boolean => Value::Bool(true),
        DataType::Enum(values) => Value::String(values.first().cloned().unwrap_or_default()),
        DataType::Text => Value::String("ok".into()),
    }
}

/// The happy path: every external condition is confirmed up front, then
/// available tasks are worked off in view order (10 s each) until all are
/// completed. The mission is closed at the end.
pub fn happy_script(graph: &TaskGraph, bindings: &BTreeMap<String, String>) -> Result<Script, EngineError> {
    let mut script = Script::default();
    for (key, actor) in bindings {
        script.push(Action::Bind { key: key.clone(), actor: actor.clone() });
    }
    let mut state = MissionState::start_mission("happy", graph.clone(), bindings.clone(), 0)?;
    for c in graph.conditions.iter().filter(|c| c.kind == ConditionKind::External) {
        let consumed = graph.tasks.iter().any(|t| t.given.contains(&c.id));
        if consumed {
            state.confirm_condition(&c.id, MISSION_COMMANDER, 0)?;
            script.push(Action::Confirm { actor: MISSION_COMMANDER.to_string(), condition: c.id.clone() });
        }
    }
    let mut now = 0;
    loop {
        let next = state
            .statuses()
            .filter(|(_, s)| *s == TaskStatus::Available)
            .map(|(t, _)| (state.priority(&t.task_id).unwrap_or_default(), state.graph().phase_index(&t.phase), t.task_id.clone()))
            .min();
        let Some((_, _, task_id)) = next else { break };
        let task = state.task(&task_id).expect("listed task exists").clone();
        let actor = state.resolve(&task.responsible);
        state.start_task(&task_id, &actor, now)?;
        script.push(Action::Start { actor: actor.clone(), task: task_id.clone() });
        if task.step_type == StepType::DataCollection {
            if let Some(spec) = &task.data_spec {
                let value = valid_value(spec);
                state.record_data(&task_id, value.clone(), &actor, now)?;
                script.push(Action::Record { actor: actor.clone(), task: task_id.clone(), value });
            }
        }
        now += 10_000;
        state.tick(now)?;
        script.push(Action::Advance { seconds: 10 });
        state.complete_task(&task_id, &actor, now)?;
        script.push(Action::Complete { actor, task: task_id });
    }
    script.push(Action::Close { actor: MISSION_COMMANDER.to_string() });
    Ok(script)
}
