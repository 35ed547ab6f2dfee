//! Clause-value grammar shared by the `.fits` parser and the CSV importer.

use std::sync::OnceLock;

use regex::Regex;

use crate::model::{
    BindingExpr, DataSpec, DataType, Domain, RoleExpr, ScenarioTemplate, StepType, Validation,
    VariableDecl, VariableKind,
};
use crate::text::{self, is_identifier};

/// How a type cell was spelled; `PC (M)` is accepted as a manual TE step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TypeCode {
    Exact(StepType),
    ManualConfirmation,
}

impl TypeCode {
    pub(crate) fn step_type(self) -> StepType {
        match self {
            TypeCode::Exact(t) => t,
            TypeCode::ManualConfirmation => StepType::Execution,
        }
    }
}

pub(crate) fn parse_type_code(text: &str) -> Result<TypeCode, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_uppercase();
    match compact.as_str() {
        "TE" => Ok(TypeCode::Exact(StepType::Execution)),
        "TD" => Ok(TypeCode::Exact(StepType::DataCollection)),
        "PC(M)" => Ok(TypeCode::ManualConfirmation),
        _ => Err(format!("unknown step type `{}` (expected TE or TD)", text.trim())),
    }
}

/// `x in 1..3`, `var x in a, b`, `binding pilot in pilot_1, pilot_2`.
pub(crate) fn parse_variable(text: &str) -> Result<VariableDecl, String> {
    let text = text.trim();
    let (kind, rest) = if let Some(rest) = text.strip_prefix("binding ") {
        (VariableKind::Binding, rest)
    } else if let Some(rest) = text.strip_prefix("var ") {
        (VariableKind::Index, rest)
    } else {
        (VariableKind::Index, text)
    };
    let (name, domain) = rest
        .split_once(" in ")
        .ok_or_else(|| format!("variable declaration `{text}` needs `<name> in <domain>`"))?;
    let name = name.trim().trim_start_matches('<').trim_end_matches('>');
    if !is_identifier(name) {
        return Err(format!("`{name}` is not a valid variable name"));
    }
    Ok(VariableDecl { name: name.to_string(), domain: parse_domain(domain)?, kind })
}

fn parse_domain(text: &str) -> Result<Domain, String> {
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        if let (Ok(start), Ok(end)) = (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
            if start > end {
                return Err(format!("empty range {start}..{end}"));
            }
            return Ok(Domain::Range { start, end });
        }
    }
    let values: Vec<String> = text.split(',').map(|v| v.trim().to_string()).collect();
    if values.iter().any(String::is_empty) {
        return Err(format!("malformed value list `{text}`"));
    }
    Ok(Domain::Values(values))
}

pub(crate) fn print_variable(var: &VariableDecl) -> String {
    let domain = match &var.domain {
        Domain::Range { start, end } => format!("{start}..{end}"),
        Domain::Values(values) => values.join(", "),
    };
    match var.kind {
        VariableKind::Index => format!("var {} in {domain}", var.name),
        VariableKind::Binding => format!("binding {} in {domain}", var.name),
    }
}

fn split_arrow(text: &str) -> Option<(&str, &str)> {
    text.split_once("->").or_else(|| text.split_once('→'))
}

fn bare_placeholder(text: &str) -> Option<&str> {
    let inner = text.strip_prefix('<')?.strip_suffix('>')?;
    is_identifier(inner).then_some(inner)
}

/// `mission_commander`, `sUAS<x> -> <pilot>`, or `<pilot>`.
pub(crate) fn parse_role(text: &str) -> Result<RoleExpr, String> {
    let text = text.trim();
    if let Some((anchor, slot)) = split_arrow(text) {
        let anchor = anchor.trim();
        let slot = bare_placeholder(slot.trim())
            .ok_or_else(|| format!("binding slot in `{text}` must be written <name>"))?;
        if anchor.is_empty() || anchor.contains(char::is_whitespace) {
            return Err(format!("malformed binding anchor in `{text}`"));
        }
        return Ok(RoleExpr::Binding { anchor: anchor.to_string(), slot: slot.to_string() });
    }
    if let Some(p) = bare_placeholder(text) {
        return Ok(RoleExpr::Param(p.to_string()));
    }
    if text.is_empty() || text.contains(char::is_whitespace) {
        return Err(format!("malformed role `{text}`"));
    }
    Ok(RoleExpr::Role(text.to_string()))
}

pub(crate) fn parse_binding_expr(text: &str) -> Result<BindingExpr, String> {
    let text = text.trim();
    if let Some((anchor, slot)) = split_arrow(text) {
        let slot = bare_placeholder(slot.trim())
            .ok_or_else(|| format!("binding slot in `{text}` must be written <name>"))?;
        let anchor = anchor.trim();
        if anchor.is_empty() {
            return Err(format!("missing binding anchor in `{text}`"));
        }
        return Ok(BindingExpr::Binding { anchor: anchor.to_string(), slot: slot.to_string() });
    }
    if text.is_empty() || text.contains(',') {
        return Err(format!("malformed parameter value `{text}`"));
    }
    Ok(BindingExpr::Value(text.to_string()))
}

/// `120`, `120s`, `2m`, `1m30s`, `2 min`.
pub(crate) fn parse_duration(text: &str) -> Result<u64, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_ascii_lowercase();
    let bad = || format!("malformed duration `{}`", text.trim());
    if compact.is_empty() {
        return Err(bad());
    }
    if let Ok(secs) = compact.parse::<u64>() {
        return Ok(secs);
    }
    let mut total: u64 = 0;
    let mut rest = compact.as_str();
    while !rest.is_empty() {
        let digits = rest.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
        if digits == 0 {
            return Err(bad());
        }
        let value: u64 = rest[..digits].parse().map_err(|_| bad())?;
        rest = &rest[digits..];
        let unit_len = rest.find(|c: char| c.is_ascii_digit()).unwrap_or(rest.len());
        let factor = match &rest[..unit_len] {
            "s" | "sec" | "secs" => 1,
            "m" | "min" | "mins" => 60,
            "h" => 3600,
            _ => return Err(bad()),
        };
        total = total.checked_add(value.checked_mul(factor).ok_or_else(bad)?).ok_or_else(bad)?;
        rest = &rest[unit_len..];
    }
    Ok(total)
}

/// `satellite_fixes integer range 6..30 telemetry satellite_fixes`
pub(crate) fn parse_data_spec(text: &str) -> Result<DataSpec, String> {
    let text = text.trim();
    let (field, rest) = text.split_once(char::is_whitespace).ok_or_else(|| {
        format!("data spec `{text}` needs `<field> <type>`")
    })?;
    if !is_identifier(field) {
        return Err(format!("data field `{field}` is not an identifier"));
    }
    let rest = rest.trim_start();
    let (datatype, mut rest) = if let Some(after) = rest.strip_prefix("enum(") {
        let close = after.find(')').ok_or("unterminated enum(...)")?;
        let values: Vec<String> = after[..close]
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err("enum needs at least one value".to_string());
        }
        (DataType::Enum(values), &after[close + 1..])
    } else {
        let (word, after) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let dt = match word {
            "number" => DataType::Number,
            "integer" => DataType::Integer,
            "text" => DataType::Text,
            "boolean" => DataType::Boolean,
            other => return Err(format!("unknown datatype `{other}`")),
        };
        (dt, after)
    };

    let mut spec = DataSpec { field_name: field.to_string(), datatype, validation: None, telemetry_key: None };
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        let (word, after) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        let after = after.trim_start();
        match word {
            "range" => {
                let (range, tail) = after.split_once(char::is_whitespace).unwrap_or((after, ""));
                let (a, b) = range.split_once("..").ok_or_else(|| format!("malformed range `{range}`"))?;
                let min: f64 = a.parse().map_err(|_| format!("malformed range `{range}`"))?;
                let max: f64 = b.parse().map_err(|_| format!("malformed range `{range}`"))?;
                if !(min <= max) {
                    return Err(format!("range {range} has min > max"));
                }
                spec.validation = Some(Validation::Range { min, max });
                rest = tail;
            }
            "regex" => {
                let (pattern, tail) = take_quoted(after).ok_or("regex needs a quoted pattern")?;
                Regex::new(&pattern).map_err(|e| format!("invalid regex: {e}"))?;
                spec.validation = Some(Validation::Regex(pattern));
                rest = tail;
            }
            "telemetry" => {
                let (key, tail) = after.split_once(char::is_whitespace).unwrap_or((after, ""));
                if !is_identifier(key) {
                    return Err(format!("telemetry key `{key}` is not an identifier"));
                }
                spec.telemetry_key = Some(key.to_string());
                rest = tail;
            }
            other => return Err(format!("unknown data option `{other}`")),
        }
    }
    let problems = spec.invariant_violations();
    if let Some(first) = problems.into_iter().next() {
        return Err(first);
    }
    Ok(spec)
}

pub(crate) fn print_data_spec(spec: &DataSpec) -> String {
    let mut out = format!("{} {}", spec.field_name, spec.datatype);
    if let DataType::Enum(values) = &spec.datatype {
        out = format!("{} enum({})", spec.field_name, values.join(", "));
    }
    match &spec.validation {
        Some(Validation::Range { min, max }) => out.push_str(&format!(" range {min:?}..{max:?}")),
        Some(Validation::Regex(p)) => out.push_str(&format!(" regex {}", quote(p))),
        None => {}
    }
    if let Some(key) = &spec.telemetry_key {
        out.push_str(&format!(" telemetry {key}"));
    }
    out
}

/// Reads a double-quoted string with `\"` and `\\` escapes from the start of
/// `text`; returns the unescaped content and the remainder.
pub(crate) fn take_quoted(text: &str) -> Option<(String, &str)> {
    let mut chars = text.char_indices();
    if chars.next()?.1 != '"' {
        return None;
    }
    let mut out = String::new();
    let mut escaped = false;
    for (i, c) in chars {
        if escaped {
            out.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            return Some((out, &text[i + 1..]));
        } else {
            out.push(c);
        }
    }
    None
}

pub(crate) fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    for c in text.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn anchor_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"([A-Za-z0-9_<>]+)\s*(?:->|→)\s*<([A-Za-z_][A-Za-z0-9_]*)>").unwrap())
}

/// A bare `<pilot>` responsible, where `pilot` is a binding variable, takes
/// its anchor from the step's action text (`RPIC(sUAS<x>→<pilot>) shall ...`).
pub(crate) fn resolve_bare_bindings(template: &mut ScenarioTemplate) {
    let binding_vars: Vec<String> = template
        .variables
        .iter()
        .filter(|v| v.kind == VariableKind::Binding)
        .map(|v| v.name.clone())
        .collect();
    for step in &mut template.steps {
        let Some(RoleExpr::Param(slot)) = &step.responsible else { continue };
        if !binding_vars.contains(slot) {
            continue;
        }
        let anchor = anchor_regex()
            .captures_iter(&step.when)
            .find(|c| &c[2] == slot.as_str())
            .map(|c| c[1].to_string());
        if let Some(anchor) = anchor {
            step.responsible = Some(RoleExpr::Binding { anchor, slot: slot.clone() });
        }
    }
}

/// Rewrites spreadsheet-style `sUAS_x` into `sUAS<x>` when `x` is a declared
/// index variable.
pub(crate) fn spreadsheet_anchor(value: &str, index_vars: &[String]) -> String {
    let value = value.trim();
    if !text::placeholders(value).is_empty() {
        return value.to_string();
    }
    if let Some((head, var)) = value.rsplit_once('_') {
        if index_vars.iter().any(|v| v == var) && !head.is_empty() {
            return format!("{head}<{var}>");
        }
    }
    value.to_string()
}
