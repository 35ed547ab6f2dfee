//! Import of spreadsheet templates exported as CSV.
//!
//! Optional setup rows (`ID`, `Name`, `Description`, `Primary Actor`,
//! `Supporting Actor`, `Variables`, `Phases`) may precede the header row. The
//! header needs at least `Step, Given, When, Then, Type, Resp.`; `Prio.`,
//! `Sub.Pr.`, `SubPr. Params`, `Phase`, `Duration` and `Data` are optional.

use std::collections::{BTreeMap, BTreeSet};

use super::clauses::{self, TypeCode};
use crate::diagnostic::{finish, DiagCode, Diagnostic, ParseResult, SourceSpan};
use crate::model::{
    BindingExpr, ConditionText, Priority, ScenarioTemplate, StepTemplate, StepType, SubprocessCall,
    VariableKind,
};
use crate::text::{self, is_identifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Column {
    Step,
    Given,
    When,
    Then,
    Type,
    Resp,
    Prio,
    SubPr,
    SubPrParams,
    Phase,
    Duration,
    Data,
}

const MANDATORY: [(Column, &str); 6] = [
    (Column::Step, "Step"),
    (Column::Given, "Given"),
    (Column::When, "When"),
    (Column::Then, "Then"),
    (Column::Type, "Type"),
    (Column::Resp, "Resp."),
];

fn squash(cell: &str) -> String {
    cell.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

fn header_column(cell: &str) -> Option<Column> {
    Some(match squash(cell).as_str() {
        "step" => Column::Step,
        "given" => Column::Given,
        "when" => Column::When,
        "then" => Column::Then,
        "type" => Column::Type,
        "resp" | "responsible" => Column::Resp,
        "prio" | "priority" => Column::Prio,
        "subpr" | "subprocess" => Column::SubPr,
        "subprparams" | "subprocessparams" | "params" => Column::SubPrParams,
        "phase" => Column::Phase,
        "duration" => Column::Duration,
        "data" | "dataspec" => Column::Data,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SetupKey {
    Id,
    Name,
    Description,
    Primary,
    Supporting,
    Variables,
    Phases,
}

fn setup_key(cell: &str) -> Option<SetupKey> {
    Some(match squash(cell).as_str() {
        "id" => SetupKey::Id,
        "name" => SetupKey::Name,
        "description" => SetupKey::Description,
        "primaryactor" | "primaryactors" => SetupKey::Primary,
        "supportingactor" | "supportingactors" => SetupKey::Supporting,
        "variables" | "variable" => SetupKey::Variables,
        "phases" => SetupKey::Phases,
        _ => return None,
    })
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn split_conditions(cell: &str) -> Vec<(bool, String)> {
    cell.split(['\n', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let lower = s.to_ascii_lowercase();
            if lower.starts_with("external:") {
                (true, s["external:".len()..].trim().to_string())
            } else {
                (false, s.to_string())
            }
        })
        .filter(|(_, s)| !s.is_empty())
        .collect()
}

/// Imports a spreadsheet template. `fallback_id` names the scenario when no
/// `ID` setup row is present (typically the file stem).
pub fn import_csv_template(source: &str, file: &str, fallback_id: &str) -> ParseResult<ScenarioTemplate> {
    let mut diags = Vec::new();
    let span_at = |line: usize| SourceSpan::new(file, line, 1, 1);

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source.as_bytes());
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for record in reader.records() {
        match record {
            Ok(r) => {
                let line = r.position().map_or(1, |p| p.line() as usize);
                rows.push((line, r.iter().map(|c| c.to_string()).collect()));
            }
            Err(e) => {
                let line = e.position().map_or(1, |p| p.line() as usize);
                diags.push(Diagnostic::error(DiagCode::InvalidValue, span_at(line), format!("unreadable CSV row: {e}")));
            }
        }
    }

    let mut template = ScenarioTemplate::new(fallback_id, fallback_id);
    let mut name_set = false;
    let mut rows = rows.into_iter().filter(|(_, cells)| cells.iter().any(|c| !c.trim().is_empty()));

    // Setup rows, then the header.
    let mut header: Option<(usize, BTreeMap<Column, usize>)> = None;
    let mut first_line = 1;
    for (line, cells) in rows.by_ref() {
        first_line = line;
        let first = cells.first().map(String::as_str).unwrap_or("");
        if let Some(key) = setup_key(first) {
            let value = cells[1..].iter().map(|c| c.trim()).find(|c| !c.is_empty()).unwrap_or("");
            match key {
                SetupKey::Id => template.id = value.to_string(),
                SetupKey::Name => {
                    template.name = value.to_string();
                    name_set = true;
                }
                SetupKey::Description => template.description = value.to_string(),
                SetupKey::Primary => template.primary_actors = split_list(value),
                SetupKey::Supporting => template.supporting_actors = split_list(value),
                SetupKey::Phases => template.phases = split_list(value),
                SetupKey::Variables => {
                    for item in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                        match clauses::parse_variable(item) {
                            Ok(v) => template.variables.push(v),
                            Err(msg) => diags.push(Diagnostic::error(DiagCode::InvalidValue, span_at(line), msg)),
                        }
                    }
                }
            }
            continue;
        }
        let mut columns = BTreeMap::new();
        for (i, cell) in cells.iter().enumerate() {
            if let Some(col) = header_column(cell) {
                columns.entry(col).or_insert(i);
            }
        }
        header = Some((line, columns));
        break;
    }
    if !name_set {
        template.name = template.id.clone();
    }

    let Some((header_line, columns)) = header else {
        diags.push(Diagnostic::error(DiagCode::ExpectedDeclaration, span_at(first_line), "expected header row"));
        return Err(diags);
    };
    let missing: Vec<&str> =
        MANDATORY.iter().filter(|(c, _)| !columns.contains_key(c)).map(|(_, name)| *name).collect();
    if !missing.is_empty() {
        for name in missing {
            diags.push(Diagnostic::error(
                DiagCode::MissingColumn,
                span_at(header_line),
                format!("missing mandatory column {name}"),
            ));
        }
        return Err(diags);
    }

    let index_vars: Vec<String> = template
        .variables
        .iter()
        .filter(|v| v.kind == VariableKind::Index)
        .map(|v| v.name.clone())
        .collect();
    let mut seen_ids = BTreeSet::new();
    for (line, cells) in rows {
        let cell = |col: Column| -> &str {
            columns.get(&col).and_then(|&i| cells.get(i)).map(|s| s.trim()).unwrap_or("")
        };
        let here = span_at(line);
        let mut step = StepTemplate::new(cell(Column::Step), cell(Column::When));
        if step.step_id.is_empty() {
            diags.push(Diagnostic::error(DiagCode::InvalidValue, here.clone(), "row has no step id"));
            continue;
        }
        if !seen_ids.insert(step.step_id.clone()) {
            diags.push(Diagnostic::error(DiagCode::DuplicateStepId, here.clone(), format!("duplicate step id {}", step.step_id)));
        }
        for (external, text) in split_conditions(cell(Column::Given)) {
            step.given.push(if external { ConditionText::external(text) } else { ConditionText::internal(text) });
        }
        for (_, text) in split_conditions(cell(Column::Then)) {
            step.then.push(ConditionText::internal(text));
        }
        match clauses::parse_type_code(cell(Column::Type)) {
            Ok(code) => {
                if code == TypeCode::ManualConfirmation {
                    diags.push(Diagnostic::warning(
                        DiagCode::MappedTypeCode,
                        here.clone(),
                        format!("step {}: type code PC (M) treated as a manually confirmed TE step", step.step_id),
                    ));
                }
                step.step_type = code.step_type();
            }
            Err(msg) => diags.push(Diagnostic::error(DiagCode::UnknownTypeCode, here.clone(), msg)),
        }
        let resp = cell(Column::Resp);
        if !resp.is_empty() {
            match clauses::parse_role(resp) {
                Ok(role) => step.responsible = Some(role),
                Err(msg) => diags.push(Diagnostic::error(DiagCode::InvalidValue, here.clone(), msg)),
            }
        }
        let prio = cell(Column::Prio);
        if !prio.is_empty() {
            match prio.parse::<u8>().ok().and_then(Priority::new) {
                Some(p) => step.priority = Some(p),
                None => diags.push(Diagnostic::error(DiagCode::InvalidValue, here.clone(), format!("priority `{prio}` must be an integer 1..5"))),
            }
        }
        let phase = cell(Column::Phase);
        if !phase.is_empty() {
            if template.phase_index(phase).is_none() {
                diags.push(Diagnostic::error(DiagCode::UndeclaredPhase, here.clone(), format!("undeclared phase {phase}")));
            }
            step.phase = Some(phase.to_string());
        }
        let duration = cell(Column::Duration);
        if !duration.is_empty() {
            match clauses::parse_duration(duration) {
                Ok(secs) => step.duration_limit = Some(secs),
                Err(msg) => diags.push(Diagnostic::error(DiagCode::InvalidValue, here.clone(), msg)),
            }
        }
        let sub = cell(Column::SubPr);
        if !sub.is_empty() {
            if !is_identifier(sub) {
                diags.push(Diagnostic::error(DiagCode::InvalidValue, here.clone(), format!("`{sub}` is not a valid sub-process name")));
            }
            match parse_params_object(cell(Column::SubPrParams), &index_vars) {
                Ok(params) => step.subprocess = Some(SubprocessCall { name: sub.to_string(), params }),
                Err(msg) => diags.push(Diagnostic::error(DiagCode::MalformedParams, here.clone(), msg)),
            }
        } else if !cell(Column::SubPrParams).is_empty() {
            diags.push(Diagnostic::error(DiagCode::MalformedParams, here.clone(), "parameters given without a sub-process"));
        }
        let data = cell(Column::Data);
        if !data.is_empty() {
            match clauses::parse_data_spec(data) {
                Ok(spec) => step.data_spec = Some(spec),
                Err(msg) => diags.push(Diagnostic::error(DiagCode::InvalidValue, here.clone(), msg)),
            }
        }

        if step.when.is_empty() && step.subprocess.is_none() {
            diags.push(Diagnostic::error(DiagCode::MissingWhen, here.clone(), format!("step {} is missing a when-clause", step.step_id)));
        }
        match (step.step_type, &step.data_spec) {
            (StepType::DataCollection, None) => diags.push(Diagnostic::error(
                DiagCode::MissingDataSpec,
                here.clone(),
                format!("TD step {} requires data spec", step.step_id),
            )),
            (StepType::Execution, Some(_)) => diags.push(Diagnostic::error(
                DiagCode::InvalidValue,
                here.clone(),
                format!("TE step {} cannot carry a data spec", step.step_id),
            )),
            _ => {}
        }
        let declared: BTreeSet<&str> = template.variables.iter().map(|v| v.name.as_str()).collect();
        for name in step.referenced_names() {
            if !declared.contains(name.as_str()) {
                diags.push(Diagnostic::error(DiagCode::UndeclaredVariable, here.clone(), format!("undeclared variable <{name}>")));
            }
        }
        template.steps.push(step);
    }

    clauses::resolve_bare_bindings(&mut template);
    if template.steps.is_empty() {
        diags.push(Diagnostic::warning(DiagCode::NoSteps, span_at(header_line), "no steps"));
    }
    finish(template, diags)
}

/// `{"sUAS": "sUAS_x", "pilot": "sUAS_x > pilot"}`
fn parse_params_object(cell: &str, index_vars: &[String]) -> Result<BTreeMap<String, BindingExpr>, String> {
    if cell.is_empty() {
        return Ok(BTreeMap::new());
    }
    let straight: String = cell
        .chars()
        .map(|c| match c {
            '“' | '”' | '„' => '"',
            other => other,
        })
        .collect();
    let raw: BTreeMap<String, String> =
        serde_json::from_str(&straight).map_err(|e| format!("malformed sub-process params `{cell}`: {e}"))?;
    let mut params = BTreeMap::new();
    for (key, value) in raw {
        if !is_identifier(&key) {
            return Err(format!("`{key}` is not a valid parameter name"));
        }
        let expr = if value.contains("->") || value.contains('→') {
            clauses::parse_binding_expr(&value)?
        } else if let Some((anchor, slot)) = split_lookup(&value) {
            let slot = slot.trim().trim_start_matches('<').trim_end_matches('>');
            if !is_identifier(slot) {
                return Err(format!("malformed binding lookup `{value}`"));
            }
            BindingExpr::Binding {
                anchor: clauses::spreadsheet_anchor(anchor, index_vars),
                slot: slot.to_string(),
            }
        } else {
            BindingExpr::Value(clauses::spreadsheet_anchor(&value, index_vars))
        };
        params.insert(key, expr);
    }
    Ok(params)
}

/// Splits `anchor > slot` without touching the `>` of a `<x>` placeholder.
fn split_lookup(value: &str) -> Option<(&str, &str)> {
    if let Some(split) = value.split_once(" > ") {
        return Some(split);
    }
    if text::placeholders(value).is_empty() {
        return value.split_once('>');
    }
    None
}
