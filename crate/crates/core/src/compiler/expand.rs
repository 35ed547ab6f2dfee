//! Step-multiplicity expansion: one task per assignment of the index
//! variables a step references.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{
    ConditionDecl, ConditionKind, RoleExpr, Responsible, ScenarioTemplate, TaskGraph, TaskNode,
    TaskOrigin, VariableKind,
};
use crate::text::{self, normalize_condition};

use super::{CompileOptions, Finding, LintCode};

/// A task plus the template-level text of each condition, for grouping
/// findings back onto the authored step.
pub(crate) struct ExpandedTask {
    pub node: TaskNode,
    pub given_templates: Vec<String>,
    pub then_templates: Vec<String>,
    sort_key: (usize, usize, Vec<usize>),
}

pub(crate) struct Expansion {
    pub tasks: Vec<ExpandedTask>,
    pub conditions: BTreeMap<String, ConditionKind>,
    pub findings: Vec<Finding>,
    /// Conditions that were switched to external because nothing produces them.
    pub auto_external: Vec<String>,
}

/// Odometer over domain indices, last variable fastest.
fn assignments(sizes: &[usize]) -> Vec<Vec<usize>> {
    if sizes.iter().any(|&n| n == 0) {
        return Vec::new();
    }
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut current = vec![0; sizes.len()];
    for _ in 0..total {
        out.push(current.clone());
        for pos in (0..sizes.len()).rev() {
            current[pos] += 1;
            if current[pos] < sizes[pos] {
                break;
            }
            current[pos] = 0;
        }
    }
    out
}

pub(crate) fn expand_lenient(template: &ScenarioTemplate, options: &CompileOptions) -> Expansion {
    let mut findings = Vec::new();
    let index_decls: Vec<_> = template.variables.iter().filter(|v| v.kind == VariableKind::Index).collect();
    let index_names: BTreeSet<String> = index_decls.iter().map(|v| v.name.clone()).collect();
    let mut tasks = Vec::new();

    for (order, step) in template.steps.iter().enumerate() {
        let location = format!("step {}", step.step_id);
        if let Some(call) = &step.subprocess {
            findings.push(Finding::error(
                LintCode::InvalidTemplate,
                &location,
                format!("sub-process {} was not inlined before expansion", call.name),
            ));
            continue;
        }
        let used = step.index_variables(&index_names);
        let vars: Vec<_> = index_decls.iter().filter(|v| used.contains(&v.name)).collect();
        let domains: Vec<Vec<String>> = vars.iter().map(|v| v.domain.values()).collect();
        if let Some(v) = vars.iter().zip(&domains).find(|(_, d)| d.is_empty()).map(|(v, _)| v) {
            findings.push(Finding::error(LintCode::EmptyDomain, &location, format!("variable <{}> has an empty domain", v.name)));
            continue;
        }
        let sizes: Vec<usize> = domains.iter().map(Vec::len).collect();
        let phase = step.phase.clone().unwrap_or_default();
        let phase_index = template.phase_index(&phase).unwrap_or(template.phases.len());

        for combo in assignments(&sizes) {
            let assignment: BTreeMap<String, String> = vars
                .iter()
                .zip(&combo)
                .zip(&domains)
                .map(|((v, &i), d)| (v.name.clone(), d[i].clone()))
                .collect();
            let lookup = |name: &str| assignment.get(name).cloned();
            let task_id = text::substitute_step_id(&step.step_id, lookup);
            let where_ = if assignment.is_empty() {
                location.clone()
            } else {
                format!("{location} ({})", render_assignment(&assignment))
            };

            let responsible = match &step.responsible {
                Some(RoleExpr::Role(r)) => Responsible::Role(text::substitute(r, lookup)),
                Some(RoleExpr::Binding { anchor, .. }) => {
                    Responsible::Binding(text::render_binding_key(anchor, lookup))
                }
                Some(RoleExpr::Param(p)) => match assignment.get(p) {
                    Some(value) => Responsible::Role(value.clone()),
                    None => {
                        findings.push(Finding::error(
                            LintCode::UnknownRole,
                            &where_,
                            format!("responsible <{p}> is not bound to an actor (write `anchor -> <{p}>`)"),
                        ));
                        continue;
                    }
                },
                None => {
                    findings.push(Finding::error(LintCode::UnknownRole, &where_, "step has no responsible role"));
                    continue;
                }
            };

            let mut given = Vec::new();
            let mut given_templates = Vec::new();
            let mut then = Vec::new();
            let mut then_templates = Vec::new();
            let mut bad = false;
            for (c, is_given) in step.given.iter().map(|c| (c, true)).chain(step.then.iter().map(|c| (c, false))) {
                let concrete = normalize_condition(&text::substitute(&c.raw, lookup));
                let template_form = normalize_condition(&c.raw);
                match (concrete, template_form) {
                    (Ok(id), Ok(tf)) => {
                        let (ids, tfs) = if is_given { (&mut given, &mut given_templates) } else { (&mut then, &mut then_templates) };
                        if !ids.contains(&id) {
                            ids.push(id);
                            tfs.push(tf);
                        }
                    }
                    _ => {
                        findings.push(Finding::error(LintCode::InvalidTemplate, &where_, "empty condition text"));
                        bad = true;
                    }
                }
            }
            if bad {
                continue;
            }

            let node = TaskNode {
                task_id,
                origin: TaskOrigin {
                    scenario_id: template.id.clone(),
                    step_id: step.step_id.clone(),
                    assignment: assignment.clone(),
                },
                given,
                when: text::substitute(&step.when, lookup),
                then,
                step_type: step.step_type,
                responsible,
                priority: step.priority.unwrap_or_default(),
                phase: phase.clone(),
                duration_limit: step.duration_limit,
                data_spec: step.data_spec.clone(),
            };
            tasks.push(ExpandedTask { node, given_templates, then_templates, sort_key: (phase_index, order, combo) });
        }
    }

    tasks.sort_by(|a, b| a.sort_key.cmp(&b.sort_key));

    let mut seen = BTreeSet::new();
    for t in &tasks {
        if !seen.insert(t.node.task_id.as_str()) {
            findings.push(Finding::error(
                LintCode::DuplicateTaskId,
                &format!("step {}", t.node.origin.step_id),
                format!("expansion yields duplicate task id {}", t.node.task_id),
            ));
        }
    }

    // Condition kinds: a given marked external anywhere makes the condition
    // externally confirmable.
    let mut conditions: BTreeMap<String, ConditionKind> = BTreeMap::new();
    let mut external_ids = BTreeSet::new();
    for t in &tasks {
        let step = template.steps.iter().find(|s| s.step_id == t.node.origin.step_id);
        let lookup = |name: &str| t.node.origin.assignment.get(name).cloned();
        if let Some(step) = step {
            for c in step.given.iter().filter(|c| c.kind == ConditionKind::External) {
                if let Ok(id) = normalize_condition(&text::substitute(&c.raw, lookup)) {
                    external_ids.insert(id);
                }
            }
        }
        for id in t.node.given.iter().chain(&t.node.then) {
            conditions.entry(id.clone()).or_insert(ConditionKind::Internal);
        }
    }
    for id in external_ids {
        conditions.insert(id, ConditionKind::External);
    }

    let mut auto_external = Vec::new();
    if options.auto_external {
        let produced: BTreeSet<&str> = tasks.iter().flat_map(|t| t.node.then.iter().map(String::as_str)).collect();
        for (id, kind) in conditions.iter_mut() {
            if *kind == ConditionKind::Internal && !produced.contains(id.as_str()) {
                *kind = ConditionKind::External;
                auto_external.push(id.clone());
            }
        }
    }

    Expansion { tasks, conditions, findings, auto_external }
}

fn render_assignment(assignment: &BTreeMap<String, String>) -> String {
    assignment.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

pub(crate) fn into_graph(template: &ScenarioTemplate, expansion: Expansion) -> TaskGraph {
    let mut actors: Vec<String> = template.primary_actors.clone();
    for a in &template.supporting_actors {
        if !actors.contains(a) {
            actors.push(a.clone());
        }
    }
    TaskGraph {
        mission_template_id: template.id.clone(),
        name: template.name.clone(),
        actors,
        phases: template.phases.clone(),
        tasks: expansion.tasks.into_iter().map(|t| t.node).collect(),
        conditions: expansion.conditions.into_iter().map(|(id, kind)| ConditionDecl { id, kind }).collect(),
    }
}
