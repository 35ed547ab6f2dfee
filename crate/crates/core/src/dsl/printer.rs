//! Canonical `.fits` rendering. `parse(print(t)) == t` for valid templates.

use std::fmt::Write;

use super::clauses::{print_data_spec, print_variable, quote};
use crate::model::{ConditionKind, ScenarioTemplate, StepTemplate, SubProcessDef, Suite};

pub fn print_scenario(t: &ScenarioTemplate) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} {}", t.id, quote(&t.name));
    if !t.description.is_empty() {
        let _ = writeln!(out, "  description: {}", t.description);
    }
    if !t.primary_actors.is_empty() {
        let _ = writeln!(out, "  primary: {}", t.primary_actors.join(", "));
    }
    if !t.supporting_actors.is_empty() {
        let _ = writeln!(out, "  supporting: {}", t.supporting_actors.join(", "));
    }
    for v in &t.variables {
        let _ = writeln!(out, "  {}", print_variable(v));
    }
    if !t.phases.is_empty() {
        let _ = writeln!(out, "  phases: {}", t.phases.join(", "));
    }
    for step in &t.steps {
        out.push('\n');
        print_step(&mut out, step);
    }
    out
}

pub fn print_subprocess(d: &SubProcessDef) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "subprocess {}({})", d.name, d.params.join(", "));
    for step in &d.steps {
        out.push('\n');
        print_step(&mut out, step);
    }
    out
}

pub fn print_suite(s: &Suite) -> String {
    let mut out = format!("suite {}\n", quote(&s.name));
    for e in &s.entries {
        let _ = writeln!(out, "  include {}", e.reference);
    }
    out
}

fn print_step(out: &mut String, step: &StepTemplate) {
    let _ = writeln!(out, "  step {}", step.step_id);
    for g in &step.given {
        match g.kind {
            ConditionKind::External => {
                let _ = writeln!(out, "    given external: {}", g.raw);
            }
            ConditionKind::Internal => {
                let _ = writeln!(out, "    given: {}", g.raw);
            }
        }
    }
    if !step.when.is_empty() {
        let _ = writeln!(out, "    when: {}", step.when);
    }
    for t in &step.then {
        let _ = writeln!(out, "    then: {}", t.raw);
    }
    let _ = writeln!(out, "    type: {}", step.step_type.code());
    if let Some(r) = &step.responsible {
        let _ = writeln!(out, "    responsible: {r}");
    }
    if let Some(p) = step.priority {
        let _ = writeln!(out, "    priority: {p}");
    }
    if let Some(phase) = &step.phase {
        let _ = writeln!(out, "    phase: {phase}");
    }
    if let Some(d) = step.duration_limit {
        let _ = writeln!(out, "    duration: {d}");
    }
    if let Some(call) = &step.subprocess {
        let params: Vec<String> = call.params.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        let _ = writeln!(out, "    uses {}({})", call.name, params.join(", "));
    }
    if let Some(spec) = &step.data_spec {
        let _ = writeln!(out, "    data: {}", print_data_spec(spec));
    }
}
