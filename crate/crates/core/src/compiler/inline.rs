//! Sub-process inlining.

use std::collections::BTreeMap;

use crate::error::CompileError;
use crate::model::{BindingExpr, RoleExpr, ScenarioTemplate, StepTemplate, SubProcessDef, SubprocessCall};
use crate::text;

/// Nesting deeper than this is treated as recursion.
pub const MAX_NESTING: usize = 8;

pub fn inline_subprocesses(
    template: &ScenarioTemplate,
    defs: &[SubProcessDef],
) -> Result<ScenarioTemplate, CompileError> {
    let by_name: BTreeMap<&str, &SubProcessDef> = defs.iter().map(|d| (d.name.as_str(), d)).collect();
    let mut out = template.clone();
    out.steps = inline_steps(&template.steps, &by_name, 0)?;
    Ok(out)
}

fn inline_steps(
    steps: &[StepTemplate],
    defs: &BTreeMap<&str, &SubProcessDef>,
    depth: usize,
) -> Result<Vec<StepTemplate>, CompileError> {
    let mut out = Vec::with_capacity(steps.len());
    for step in steps {
        let Some(call) = &step.subprocess else {
            out.push(step.clone());
            continue;
        };
        if depth >= MAX_NESTING {
            return Err(CompileError::NestingTooDeep { step: step.step_id.clone(), limit: MAX_NESTING });
        }
        let def = defs.get(call.name.as_str()).ok_or_else(|| CompileError::UnknownSubprocess {
            step: step.step_id.clone(),
            name: call.name.clone(),
        })?;
        if let Some(param) = def.params.iter().find(|p| !call.params.contains_key(*p)) {
            return Err(CompileError::UnboundParam {
                step: step.step_id.clone(),
                subprocess: def.name.clone(),
                param: param.clone(),
            });
        }
        let instantiated: Vec<StepTemplate> = def
            .steps
            .iter()
            .enumerate()
            .map(|(k, sub)| instantiate(sub, step, &call.params, k + 1))
            .collect();
        let mut flat = inline_steps(&instantiated, defs, depth + 1)?;
        // The calling step's pre-condition gates the first inlined step; its
        // post-condition is produced by the last one.
        if let Some(first) = flat.first_mut() {
            let mut given = step.given.clone();
            given.extend(first.given.drain(..));
            first.given = given;
        }
        if let Some(last) = flat.last_mut() {
            last.then.extend(step.then.iter().cloned());
        }
        out.extend(flat);
    }
    Ok(out)
}

fn instantiate(
    sub: &StepTemplate,
    parent: &StepTemplate,
    params: &BTreeMap<String, BindingExpr>,
    k: usize,
) -> StepTemplate {
    let lookup = |name: &str| params.get(name).map(BindingExpr::as_text);
    let value_lookup = |name: &str| match params.get(name) {
        Some(BindingExpr::Value(v)) => Some(v.clone()),
        _ => None,
    };
    let responsible = match &sub.responsible {
        Some(RoleExpr::Role(r)) => Some(RoleExpr::Role(text::substitute(r, value_lookup))),
        Some(RoleExpr::Binding { anchor, slot }) => Some(RoleExpr::Binding {
            anchor: text::substitute(anchor, value_lookup),
            slot: slot.clone(),
        }),
        Some(RoleExpr::Param(p)) => Some(match params.get(p) {
            Some(BindingExpr::Binding { anchor, slot }) => {
                RoleExpr::Binding { anchor: anchor.clone(), slot: slot.clone() }
            }
            Some(BindingExpr::Value(v)) => match v.strip_prefix('<').and_then(|s| s.strip_suffix('>')) {
                Some(name) if text::is_identifier(name) => RoleExpr::Param(name.to_string()),
                _ => RoleExpr::Role(v.clone()),
            },
            None => RoleExpr::Param(p.clone()),
        }),
        None => parent.responsible.clone(),
    };
    let subprocess = sub.subprocess.as_ref().map(|call| SubprocessCall {
        name: call.name.clone(),
        params: call
            .params
            .iter()
            .map(|(key, expr)| {
                let expr = match expr {
                    BindingExpr::Value(v) => match v.strip_prefix('<').and_then(|s| s.strip_suffix('>')) {
                        Some(name) if params.contains_key(name) => params[name].clone(),
                        _ => BindingExpr::Value(text::substitute(v, value_lookup)),
                    },
                    BindingExpr::Binding { anchor, slot } => BindingExpr::Binding {
                        anchor: text::substitute(anchor, value_lookup),
                        slot: slot.clone(),
                    },
                };
                (key.clone(), expr)
            })
            .collect(),
    });
    let subst_conditions = |list: &[crate::model::ConditionText]| {
        list.iter()
            .map(|c| crate::model::ConditionText { raw: text::substitute(&c.raw, lookup), kind: c.kind })
            .collect::<Vec<_>>()
    };
    StepTemplate {
        step_id: format!("{}.{k}", parent.step_id),
        given: subst_conditions(&sub.given),
        when: text::substitute(&sub.when, lookup),
        then: subst_conditions(&sub.then),
        step_type: sub.step_type,
        responsible,
        priority: sub.priority.or(parent.priority),
        phase: parent.phase.clone().or_else(|| sub.phase.clone()),
        duration_limit: sub.duration_limit,
        subprocess,
        data_spec: sub.data_spec.clone(),
    }
}
