//! Scenario, sub-process, suite and task-graph types.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::{self, normalize_condition};

/// Role reserved for machine-controlled steps; completion is confirmed by the
/// mission commander.
pub const MACHINE_ROLE: &str = "machine";
/// Role allowed to skip tasks, reprioritize, override conditions and close.
pub const MISSION_COMMANDER: &str = "mission_commander";

/// Step priority, 1 (highest) to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Priority(u8);

impl Priority {
    pub const HIGHEST: Priority = Priority(1);
    pub const LOWEST: Priority = Priority(5);

    pub fn new(value: u8) -> Option<Self> {
        (1..=5).contains(&value).then_some(Priority(value))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Default for Priority {
    fn default() -> Self {
        Priority(3)
    }
}

impl TryFrom<u8> for Priority {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Priority::new(value).ok_or_else(|| format!("priority {value} outside 1..5"))
    }
}

impl From<Priority> for u8 {
    fn from(p: Priority) -> u8 {
        p.0
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepType {
    /// Test execution: an action that advances the test.
    #[serde(rename = "TE")]
    Execution,
    /// Test data collection: prompts the responsible role for a datum.
    #[serde(rename = "TD")]
    DataCollection,
}

impl StepType {
    pub fn code(self) -> &'static str {
        match self {
            StepType::Execution => "TE",
            StepType::DataCollection => "TD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// Produced by completing a task.
    Internal,
    /// Confirmed manually in the field.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionText {
    pub raw: String,
    pub kind: ConditionKind,
}

impl ConditionText {
    pub fn internal(raw: impl Into<String>) -> Self {
        ConditionText { raw: raw.into(), kind: ConditionKind::Internal }
    }

    pub fn external(raw: impl Into<String>) -> Self {
        ConditionText { raw: raw.into(), kind: ConditionKind::External }
    }

    /// The matching identity of this condition.
    pub fn id(&self) -> Result<String, crate::error::ModelError> {
        normalize_condition(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Inclusive integer range.
    Range { start: i64, end: i64 },
    Values(Vec<String>),
}

impl Domain {
    pub fn values(&self) -> Vec<String> {
        match self {
            Domain::Range { start, end } => (*start..=*end).map(|v| v.to_string()).collect(),
            Domain::Values(values) => values.clone(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Domain::Range { start, end } if end >= start => (end - start + 1) as usize,
            Domain::Range { .. } => 0,
            Domain::Values(values) => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    /// Expanded at compile time, one task per value.
    Index,
    /// Resolved at mission start from the actor bindings.
    Binding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableDecl {
    pub name: String,
    pub domain: Domain,
    pub kind: VariableKind,
}

/// Who performs a step, before expansion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleExpr {
    /// A named role; may contain index placeholders (`observer_<x>`).
    Role(String),
    /// The actor bound to `anchor` at mission start (`sUAS<x> -> <pilot>`).
    Binding { anchor: String, slot: String },
    /// A bare `<name>`: a sub-process parameter or an unanchored variable.
    Param(String),
}

impl fmt::Display for RoleExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoleExpr::Role(r) => f.write_str(r),
            RoleExpr::Binding { anchor, slot } => write!(f, "{anchor} -> <{slot}>"),
            RoleExpr::Param(p) => write!(f, "<{p}>"),
        }
    }
}

/// Value passed to a sub-process parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingExpr {
    Value(String),
    /// "the `slot` bound to `anchor`", e.g. the pilot of `sUAS<x>`.
    Binding { anchor: String, slot: String },
}

impl BindingExpr {
    /// Text used when the parameter appears inside step prose.
    pub fn as_text(&self) -> String {
        match self {
            BindingExpr::Value(v) => v.clone(),
            BindingExpr::Binding { anchor, slot } => format!("{anchor}→<{slot}>"),
        }
    }

    fn placeholder_names(&self) -> BTreeSet<String> {
        match self {
            BindingExpr::Value(v) => text::placeholder_names(v),
            BindingExpr::Binding { anchor, slot } => {
                let mut names = text::placeholder_names(anchor);
                names.insert(slot.clone());
                names
            }
        }
    }
}

impl fmt::Display for BindingExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingExpr::Value(v) => f.write_str(v),
            BindingExpr::Binding { anchor, slot } => write!(f, "{anchor} -> <{slot}>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubprocessCall {
    pub name: String,
    pub params: BTreeMap<String, BindingExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Number,
    Integer,
    Text,
    Boolean,
    Enum(Vec<String>),
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Number => f.write_str("number"),
            DataType::Integer => f.write_str("integer"),
            DataType::Text => f.write_str("text"),
            DataType::Boolean => f.write_str("boolean"),
            DataType::Enum(values) => write!(f, "enum({})", values.join(", ")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    Range { min: f64, max: f64 },
    Regex(String),
}

/// What a TD step asks the responsible role to record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub field_name: String,
    pub datatype: DataType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<Validation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telemetry_key: Option<String>,
}

impl DataSpec {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !text::is_identifier(&self.field_name) {
            out.push(format!("data field name `{}` is not an identifier", self.field_name));
        }
        if let DataType::Enum(values) = &self.datatype {
            if values.is_empty() {
                out.push(format!("enum for `{}` has no values", self.field_name));
            }
        }
        match &self.validation {
            Some(Validation::Range { min, max }) => {
                if !(min <= max) {
                    out.push(format!("range {min}..{max} for `{}` has min > max", self.field_name));
                }
                if !matches!(self.datatype, DataType::Number | DataType::Integer) {
                    out.push(format!("range validation on non-numeric field `{}`", self.field_name));
                }
            }
            Some(Validation::Regex(pattern)) => {
                if let Err(e) = regex::Regex::new(pattern) {
                    out.push(format!("invalid regex for `{}`: {e}", self.field_name));
                }
            }
            None => {}
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTemplate {
    pub step_id: String,
    pub given: Vec<ConditionText>,
    pub when: String,
    pub then: Vec<ConditionText>,
    pub step_type: StepType,
    pub responsible: Option<RoleExpr>,
    /// `None` means the default (3), or the calling step's priority when inlined.
    pub priority: Option<Priority>,
    pub phase: Option<String>,
    /// Seconds.
    pub duration_limit: Option<u64>,
    pub subprocess: Option<SubprocessCall>,
    pub data_spec: Option<DataSpec>,
}

impl StepTemplate {
    pub fn new(step_id: impl Into<String>, when: impl Into<String>) -> Self {
        StepTemplate {
            step_id: step_id.into(),
            given: Vec::new(),
            when: when.into(),
            then: Vec::new(),
            step_type: StepType::Execution,
            responsible: None,
            priority: None,
            phase: None,
            duration_limit: None,
            subprocess: None,
            data_spec: None,
        }
    }

    /// Every placeholder name used anywhere in the step.
    pub fn referenced_names(&self) -> BTreeSet<String> {
        let mut names = text::placeholder_names(&self.step_id);
        names.extend(text::placeholder_names(&self.when));
        for c in self.given.iter().chain(&self.then) {
            names.extend(text::placeholder_names(&c.raw));
        }
        match &self.responsible {
            Some(RoleExpr::Role(r)) => names.extend(text::placeholder_names(r)),
            Some(RoleExpr::Binding { anchor, slot }) => {
                names.extend(text::placeholder_names(anchor));
                names.insert(slot.clone());
            }
            Some(RoleExpr::Param(p)) => {
                names.insert(p.clone());
            }
            None => {}
        }
        if let Some(call) = &self.subprocess {
            for expr in call.params.values() {
                names.extend(expr.placeholder_names());
            }
        }
        names
    }

    /// Index variables the step expands over, including bare names in the id.
    pub fn index_variables(&self, index_vars: &BTreeSet<String>) -> BTreeSet<String> {
        let mut used: BTreeSet<String> =
            self.referenced_names().into_iter().filter(|n| index_vars.contains(n)).collect();
        used.extend(text::step_id_variables(&self.step_id, index_vars));
        used
    }

    /// Checks that hold for any step regardless of its enclosing scope.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.step_id.trim().is_empty() {
            out.push("step id is empty".to_string());
        }
        if self.subprocess.is_none() && self.when.trim().is_empty() {
            out.push(format!("step {} has no when-clause", self.step_id));
        }
        match (self.step_type, &self.data_spec) {
            (StepType::DataCollection, None) => {
                out.push(format!("TD step {} requires data spec", self.step_id))
            }
            (StepType::Execution, Some(_)) => {
                out.push(format!("TE step {} carries a data spec", self.step_id))
            }
            (_, Some(spec)) => out.extend(spec.invariant_violations()),
            _ => {}
        }
        for c in self.given.iter().chain(&self.then) {
            if c.id().is_err() {
                out.push(format!("step {} has an empty condition", self.step_id));
            }
        }
        if self.then.iter().any(|c| c.kind == ConditionKind::External) {
            out.push(format!("step {} marks a post-condition external", self.step_id));
        }
        out
    }
}

/// A parsed, unexpanded field-test scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTemplate {
    pub id: String,
    pub name: String,
    pub description: String,
    pub primary_actors: Vec<String>,
    pub supporting_actors: Vec<String>,
    pub variables: Vec<VariableDecl>,
    pub phases: Vec<String>,
    pub steps: Vec<StepTemplate>,
}

impl ScenarioTemplate {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        ScenarioTemplate {
            id: id.into(),
            name: name.into(),
            description: String::new(),
            primary_actors: Vec::new(),
            supporting_actors: Vec::new(),
            variables: Vec::new(),
            phases: Vec::new(),
            steps: Vec::new(),
        }
    }

    pub fn actors(&self) -> BTreeSet<String> {
        self.primary_actors.iter().chain(&self.supporting_actors).cloned().collect()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableDecl> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn index_variable_names(&self) -> BTreeSet<String> {
        self.variables
            .iter()
            .filter(|v| v.kind == VariableKind::Index)
            .map(|v| v.name.clone())
            .collect()
    }

    pub fn phase_index(&self, phase: &str) -> Option<usize> {
        self.phases.iter().position(|p| p == phase)
    }

    /// Every broken type invariant, as human-readable messages. Empty means
    /// the template is well-formed.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.id.trim().is_empty() {
            out.push("scenario id is empty".to_string());
        }
        let mut declared = BTreeSet::new();
        for var in &self.variables {
            if !declared.insert(var.name.as_str()) {
                out.push(format!("variable <{}> declared twice", var.name));
            }
            if var.domain.is_empty() {
                out.push(format!("variable <{}> has an empty domain", var.name));
            }
        }
        let mut ids = BTreeSet::new();
        for step in &self.steps {
            if !ids.insert(step.step_id.as_str()) {
                out.push(format!("duplicate step id {}", step.step_id));
            }
            for name in step.referenced_names() {
                if !declared.contains(name.as_str()) {
                    out.push(format!("step {} references undeclared variable <{name}>", step.step_id));
                }
            }
            if let Some(phase) = &step.phase {
                if self.phase_index(phase).is_none() {
                    out.push(format!("step {} uses undeclared phase {phase}", step.step_id));
                }
            }
            out.extend(step.invariant_violations());
        }
        out
    }
}

/// A named, parameterized block of steps inlined at compile time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubProcessDef {
    pub name: String,
    pub params: Vec<String>,
    pub steps: Vec<StepTemplate>,
}

impl SubProcessDef {
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.steps.is_empty() {
            out.push(format!("empty sub-process {}", self.name));
        }
        let mut used = BTreeSet::new();
        for step in &self.steps {
            used.extend(step.referenced_names());
            out.extend(step.invariant_violations());
        }
        for param in &self.params {
            if !used.contains(param) {
                out.push(format!("parameter {param} of {} is never used", self.name));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    /// As written: a file path or a scenario id.
    pub reference: String,
    pub scenario_id: String,
}

/// An ordered bundle of scenarios run together in the field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub entries: Vec<SuiteEntry>,
}

/// Where a task came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOrigin {
    pub scenario_id: String,
    pub step_id: String,
    pub assignment: BTreeMap<String, String>,
}

/// The concrete performer of a task after expansion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Responsible {
    Role(String),
    /// Resolved through the mission's binding for this key (e.g. `sUAS_2`).
    Binding(String),
}

impl fmt::Display for Responsible {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Responsible::Role(r) => f.write_str(r),
            Responsible::Binding(key) => write!(f, "binding({key})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub task_id: String,
    pub origin: TaskOrigin,
    pub given: Vec<String>,
    pub when: String,
    pub then: Vec<String>,
    pub step_type: StepType,
    pub responsible: Responsible,
    pub priority: Priority,
    pub phase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_spec: Option<DataSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionDecl {
    pub id: String,
    pub kind: ConditionKind,
}

/// The compiled, executable form of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub mission_template_id: String,
    pub name: String,
    pub actors: Vec<String>,
    pub phases: Vec<String>,
    pub tasks: Vec<TaskNode>,
    /// Sorted by id.
    pub conditions: Vec<ConditionDecl>,
}

impl TaskGraph {
    pub fn task(&self, task_id: &str) -> Option<&TaskNode> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionDecl> {
        self.conditions
            .binary_search_by(|c| c.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.conditions[i])
    }

    pub fn phase_index(&self, phase: &str) -> usize {
        self.phases.iter().position(|p| p == phase).unwrap_or(self.phases.len())
    }

    /// Binding keys that must be supplied at mission start.
    pub fn bindings_required(&self) -> BTreeSet<String> {
        self.tasks
            .iter()
            .filter_map(|t| match &t.responsible {
                Responsible::Binding(key) => Some(key.clone()),
                Responsible::Role(_) => None,
            })
            .collect()
    }

    /// Condition id → tasks producing it.
    pub fn producers(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for task in &self.tasks {
            for c in &task.then {
                map.entry(c.as_str()).or_default().push(task.task_id.as_str());
            }
        }
        map
    }

    /// Condition id → tasks consuming it.
    pub fn consumers(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for task in &self.tasks {
            for c in &task.given {
                map.entry(c.as_str()).or_default().push(task.task_id.as_str());
            }
        }
        map
    }

    /// Task-level dependency cycles (each listed by task id). Self-loops count.
    pub fn cycles(&self) -> Vec<Vec<String>> {
        use petgraph::algo::tarjan_scc;
        use petgraph::graph::DiGraph;

        let mut graph = DiGraph::<&str, ()>::new();
        let nodes: BTreeMap<&str, _> =
            self.tasks.iter().map(|t| (t.task_id.as_str(), graph.add_node(t.task_id.as_str()))).collect();
        let consumers = self.consumers();
        for task in &self.tasks {
            for c in &task.then {
                for consumer in consumers.get(c.as_str()).into_iter().flatten() {
                    graph.update_edge(nodes[task.task_id.as_str()], nodes[consumer], ());
                }
            }
        }
        let mut cycles: Vec<Vec<String>> = tarjan_scc(&graph)
            .into_iter()
            .filter(|scc| scc.len() > 1 || graph.contains_edge(scc[0], scc[0]))
            .map(|scc| {
                let mut ids: Vec<String> = scc.iter().map(|n| graph[*n].to_string()).collect();
                ids.sort();
                ids
            })
            .collect();
        cycles.sort();
        cycles
    }

    /// Internal conditions that some task consumes but no task produces.
    pub fn unproduced_conditions(&self) -> Vec<String> {
        let producers = self.producers();
        self.conditions
            .iter()
            .filter(|c| c.kind == ConditionKind::Internal && !producers.contains_key(c.id.as_str()))
            .map(|c| c.id.clone())
            .collect()
    }

    /// Every broken graph invariant, as messages.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut ids = BTreeSet::new();
        for task in &self.tasks {
            if !ids.insert(task.task_id.as_str()) {
                out.push(format!("duplicate task id {}", task.task_id));
            }
            if let Responsible::Role(r) = &task.responsible {
                if !text::placeholders(r).is_empty() {
                    out.push(format!("task {} has unresolved role {r}", task.task_id));
                }
            }
            for c in task.given.iter().chain(&task.then) {
                if self.condition(c).is_none() {
                    out.push(format!("task {} uses undeclared condition `{c}`", task.task_id));
                }
            }
        }
        for c in self.unproduced_conditions() {
            out.push(format!("internal condition `{c}` has no producer"));
        }
        for cycle in self.cycles() {
            out.push(format!("dependency cycle: {}", cycle.join(" -> ")));
        }
        out
    }
}
