//! Lint, sub-process inlining and step-multiplicity expansion.
//!
//! [`compile`] runs all three: a template that lints clean is inlined,
//! expanded into a [`TaskGraph`] and re-checked against the graph invariants.

mod expand;
mod inline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use crate::diagnostic::Severity;
use crate::error::CompileError;
use crate::model::{
    ConditionKind, Responsible, RoleExpr, ScenarioTemplate, StepTemplate, StepType, SubProcessDef, Suite,
    TaskGraph, VariableKind, MACHINE_ROLE,
};
pub use inline::{inline_subprocesses, MAX_NESTING};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    /// Treat conditions nobody produces as external (with a warning) instead
    /// of rejecting them as unsatisfiable.
    pub auto_external: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LintCode {
    InvalidTemplate,
    UnsatisfiablePrecondition,
    DanglingPostcondition,
    DependencyCycle,
    UnknownRole,
    UnboundParam,
    UnknownParam,
    MissingDataSpec,
    DuplicateTaskId,
    UnknownSubprocess,
    NestingTooDeep,
    EmptyDomain,
    AutoExternal,
    UnresolvedScenario,
}

impl LintCode {
    pub fn as_str(self) -> &'static str {
        match self {
            LintCode::InvalidTemplate => "invalid-template",
            LintCode::UnsatisfiablePrecondition => "unsatisfiable-precondition",
            LintCode::DanglingPostcondition => "dangling-postcondition",
            LintCode::DependencyCycle => "dependency-cycle",
            LintCode::UnknownRole => "unknown-role",
            LintCode::UnboundParam => "unbound-param",
            LintCode::UnknownParam => "unknown-param",
            LintCode::MissingDataSpec => "missing-data-spec",
            LintCode::DuplicateTaskId => "duplicate-task-id",
            LintCode::UnknownSubprocess => "unknown-subprocess",
            LintCode::NestingTooDeep => "nesting-too-deep",
            LintCode::EmptyDomain => "empty-domain",
            LintCode::AutoExternal => "auto-external",
            LintCode::UnresolvedScenario => "unresolved-scenario",
        }
    }
}

impl fmt::Display for LintCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub code: LintCode,
    pub severity: Severity,
    pub message: String,
    pub location: String,
}

impl Finding {
    pub fn error(code: LintCode, location: &str, message: impl Into<String>) -> Self {
        Finding { code, severity: Severity::Error, message: message.into(), location: location.to_string() }
    }

    pub fn warning(code: LintCode, location: &str, message: impl Into<String>) -> Self {
        Finding { code, severity: Severity::Warning, message: message.into(), location: location.to_string() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}: {}", self.severity, self.code, self.location, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintReport {
    pub scenario_id: String,
    pub findings: Vec<Finding>,
    pub passed: bool,
}

impl LintReport {
    fn new(scenario_id: &str, findings: Vec<Finding>) -> Self {
        let passed = !findings.iter().any(Finding::is_error);
        LintReport { scenario_id: scenario_id.to_string(), findings, passed }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.is_error())
    }

    pub fn with_code(&self, code: LintCode) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(move |f| f.code == code)
    }
}

pub fn lint(template: &ScenarioTemplate, subprocesses: &[SubProcessDef]) -> LintReport {
    lint_with(template, subprocesses, &CompileOptions::default())
}

pub fn lint_with(template: &ScenarioTemplate, subprocesses: &[SubProcessDef], options: &CompileOptions) -> LintReport {
    let mut findings = Vec::new();
    let scenario_loc = format!("scenario {}", template.id);

    for msg in template.invariant_violations() {
        if msg.contains("requires data spec") {
            continue;
        }
        let code = if msg.contains("empty domain") { LintCode::EmptyDomain } else { LintCode::InvalidTemplate };
        findings.push(Finding::error(code, &scenario_loc, msg));
    }
    check_data_specs(&template.steps, "", &mut findings);

    let actors = template.actors();
    for var in template.variables.iter().filter(|v| v.kind == VariableKind::Binding) {
        for value in var.domain.values() {
            if !actors.contains(&value) {
                findings.push(Finding::error(
                    LintCode::UnknownRole,
                    &format!("variable <{}>", var.name),
                    format!("binding value {value} is not a declared actor"),
                ));
            }
        }
    }

    // Sub-process references, including those nested inside definitions.
    let defs: BTreeMap<&str, &SubProcessDef> = subprocesses.iter().map(|d| (d.name.as_str(), d)).collect();
    let mut used_defs = BTreeSet::new();
    let mut pending: Vec<(String, &StepTemplate)> =
        template.steps.iter().map(|s| (format!("step {}", s.step_id), s)).collect();
    while let Some((location, step)) = pending.pop() {
        let Some(call) = &step.subprocess else { continue };
        let Some(def) = defs.get(call.name.as_str()) else {
            findings.push(Finding::error(
                LintCode::UnknownSubprocess,
                &location,
                format!("unknown sub-process {}", call.name),
            ));
            continue;
        };
        for param in def.params.iter().filter(|p| !call.params.contains_key(*p)) {
            findings.push(Finding::error(
                LintCode::UnboundParam,
                &location,
                format!("parameter {param} of {} is unbound", def.name),
            ));
        }
        for key in call.params.keys().filter(|k| !def.params.contains(k)) {
            findings.push(Finding::error(
                LintCode::UnknownParam,
                &location,
                format!("{} has no parameter {key}", def.name),
            ));
        }
        if used_defs.insert(def.name.as_str()) {
            let def_loc = format!("subprocess {}", def.name);
            for msg in def.invariant_violations() {
                if !msg.contains("requires data spec") {
                    findings.push(Finding::error(LintCode::InvalidTemplate, &def_loc, msg));
                }
            }
            check_data_specs(&def.steps, &format!("{def_loc} "), &mut findings);
            pending.extend(def.steps.iter().map(|s| (format!("{def_loc} step {}", s.step_id), s)));
        }
    }
    if findings.iter().any(Finding::is_error) {
        return LintReport::new(&template.id, findings);
    }

    let inlined = match inline_subprocesses(template, subprocesses) {
        Ok(t) => t,
        Err(e) => {
            let code = match e {
                CompileError::NestingTooDeep { .. } => LintCode::NestingTooDeep,
                CompileError::UnknownSubprocess { .. } => LintCode::UnknownSubprocess,
                CompileError::UnboundParam { .. } => LintCode::UnboundParam,
                _ => LintCode::InvalidTemplate,
            };
            findings.push(Finding::error(code, &scenario_loc, e.to_string()));
            return LintReport::new(&template.id, findings);
        }
    };

    for step in &inlined.steps {
        if let Some(RoleExpr::Binding { slot, .. }) = &step.responsible {
            if inlined.variable(slot).is_some_and(|v| v.kind != VariableKind::Binding) {
                findings.push(Finding::error(
                    LintCode::InvalidTemplate,
                    &format!("step {}", step.step_id),
                    format!("<{slot}> is used as a binding slot but declared as an index variable"),
                ));
            }
        }
    }

    let expansion = expand::expand_lenient(&inlined, options);
    findings.extend(expansion.findings.iter().cloned());

    // Roles, grouped per authored step.
    let mut bad_roles: BTreeMap<(String, String), ()> = BTreeMap::new();
    for t in &expansion.tasks {
        if let Responsible::Role(r) = &t.node.responsible {
            if r != MACHINE_ROLE && !actors.contains(r) {
                bad_roles.insert((t.node.origin.step_id.clone(), r.clone()), ());
            }
        }
    }
    for (step, role) in bad_roles.into_keys() {
        findings.push(Finding::error(
            LintCode::UnknownRole,
            &format!("step {step}"),
            format!("responsible role {role} is not a declared actor"),
        ));
    }

    for id in &expansion.auto_external {
        findings.push(Finding::warning(
            LintCode::AutoExternal,
            &scenario_loc,
            format!("no step produces `{id}`; treating it as externally confirmed"),
        ));
    }

    let produced: BTreeSet<&str> =
        expansion.tasks.iter().flat_map(|t| t.node.then.iter().map(String::as_str)).collect();
    let consumed: BTreeSet<&str> =
        expansion.tasks.iter().flat_map(|t| t.node.given.iter().map(String::as_str)).collect();

    // (step, template form) -> concrete ids, so one authored precondition
    // yields one finding however many tasks it expands to.
    let mut unsatisfiable: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    let mut dangling: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for t in &expansion.tasks {
        for (id, form) in t.node.given.iter().zip(&t.given_templates) {
            let internal = expansion.conditions.get(id) == Some(&ConditionKind::Internal);
            if internal && !produced.contains(id.as_str()) {
                unsatisfiable.entry((t.node.origin.step_id.clone(), form.clone())).or_default().push(id.clone());
            }
        }
        for (id, form) in t.node.then.iter().zip(&t.then_templates) {
            if !consumed.contains(id.as_str()) {
                dangling.entry((t.node.origin.step_id.clone(), form.clone())).or_default().push(id.clone());
            }
        }
    }
    for ((step, form), ids) in unsatisfiable {
        findings.push(Finding::error(
            LintCode::UnsatisfiablePrecondition,
            &format!("step {step}"),
            format!("unsatisfiable precondition `{form}`: no step produces {}", list_ids(&ids)),
        ));
    }
    for ((step, form), ids) in dangling {
        findings.push(Finding::warning(
            LintCode::DanglingPostcondition,
            &format!("step {step}"),
            format!("dangling post-condition `{form}`: nothing consumes {}", list_ids(&ids)),
        ));
    }

    let graph = expand::into_graph(&inlined, expansion);
    for cycle in graph.cycles() {
        findings.push(Finding::error(
            LintCode::DependencyCycle,
            &scenario_loc,
            format!("dependency cycle [{}]", cycle.join(", ")),
        ));
    }

    LintReport::new(&template.id, findings)
}

fn check_data_specs(steps: &[StepTemplate], prefix: &str, findings: &mut Vec<Finding>) {
    for step in steps {
        if step.step_type == StepType::DataCollection && step.data_spec.is_none() {
            findings.push(Finding::error(
                LintCode::MissingDataSpec,
                &format!("{prefix}step {}", step.step_id),
                "TD step requires data spec",
            ));
        }
    }
}

fn list_ids(ids: &[String]) -> String {
    ids.iter().map(|i| format!("`{i}`")).collect::<Vec<_>>().join(", ")
}

/// Expands an already-inlined template into a task graph.
pub fn expand(template: &ScenarioTemplate) -> Result<TaskGraph, CompileError> {
    expand_with(template, &CompileOptions::default())
}

pub fn expand_with(template: &ScenarioTemplate, options: &CompileOptions) -> Result<TaskGraph, CompileError> {
    let index_names = template.index_variable_names();
    for step in &template.steps {
        for name in step.index_variables(&index_names) {
            if template.variable(&name).is_some_and(|v| v.domain.is_empty()) {
                return Err(CompileError::EmptyDomain(name));
            }
        }
    }
    let expansion = expand::expand_lenient(template, options);
    let mut seen = BTreeSet::new();
    for t in &expansion.tasks {
        if !seen.insert(t.node.task_id.clone()) {
            return Err(CompileError::DuplicateTaskId(t.node.task_id.clone()));
        }
    }
    if !expansion.findings.is_empty() {
        return Err(CompileError::InvalidTemplate(expansion.findings.iter().map(|f| f.message.clone()).collect()));
    }
    let graph = expand::into_graph(template, expansion);
    let violations = graph.invariant_violations();
    if !violations.is_empty() {
        return Err(CompileError::InvalidGraph(violations));
    }
    Ok(graph)
}

/// A successfully compiled scenario plus its (warning-only) lint report.
#[derive(Debug, Clone, PartialEq)]
pub struct Compilation {
    pub graph: TaskGraph,
    pub report: LintReport,
}

/// Lints, inlines and expands. A failing lint is returned as the error.
pub fn compile(
    template: &ScenarioTemplate,
    subprocesses: &[SubProcessDef],
    options: &CompileOptions,
) -> Result<Compilation, LintReport> {
    let report = lint_with(template, subprocesses, options);
    if !report.passed {
        return Err(report);
    }
    let graph = inline_subprocesses(template, subprocesses)
        .and_then(|t| expand_with(&t, options))
        .map_err(|e| {
            LintReport::new(
                &template.id,
                vec![Finding::error(LintCode::InvalidTemplate, &format!("scenario {}", template.id), e.to_string())],
            )
        })?;
    Ok(Compilation { graph, report })
}

/// Every member whose lint failed; no graphs are produced when non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteFailure {
    pub suite: String,
    pub failed: Vec<LintReport>,
}

impl fmt::Display for SuiteFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<&str> = self.failed.iter().map(|r| r.scenario_id.as_str()).collect();
        write!(f, "suite {} failed lint in: {}", self.suite, ids.join(", "))
    }
}

impl std::error::Error for SuiteFailure {}

/// Compiles every suite member in order; any failing member aborts the whole
/// suite.
pub fn compile_suite(
    suite: &Suite,
    scenarios: &BTreeMap<String, ScenarioTemplate>,
    subprocesses: &[SubProcessDef],
    options: &CompileOptions,
) -> Result<Vec<Compilation>, SuiteFailure> {
    let mut compiled = Vec::new();
    let mut failed = Vec::new();
    for entry in &suite.entries {
        let Some(template) = scenarios.get(&entry.scenario_id) else {
            failed.push(LintReport::new(
                &entry.scenario_id,
                vec![Finding::error(
                    LintCode::UnresolvedScenario,
                    &entry.reference,
                    format!("scenario {} is not in the library", entry.scenario_id),
                )],
            ));
            continue;
        };
        match compile(template, subprocesses, options) {
            Ok(c) => compiled.push(c),
            Err(report) => failed.push(report),
        }
    }
    if failed.is_empty() {
        Ok(compiled)
    } else {
        Err(SuiteFailure { suite: suite.name.clone(), failed })
    }
}
