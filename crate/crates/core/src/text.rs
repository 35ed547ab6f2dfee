//! Placeholder handling and condition normalization.
//!
//! Variables are written `<name>` inside step text. A placeholder name is an
//! ASCII identifier; anything else between angle brackets is plain text.

use std::collections::BTreeSet;

use crate::error::ModelError;

/// A `<name>` occurrence inside a string, as a byte range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placeholder<'a> {
    pub name: &'a str,
    pub start: usize,
    pub end: usize,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Returns `true` when `s` is a plain ASCII identifier.
pub fn is_identifier(s: &str) -> bool {
    let bytes = s.as_bytes();
    !bytes.is_empty() && is_ident_start(bytes[0]) && bytes[1..].iter().all(|&b| is_ident_continue(b))
}

/// All placeholders in `text`, left to right.
pub fn placeholders(text: &str) -> Vec<Placeholder<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let mut j = i + 1;
            if j < bytes.len() && is_ident_start(bytes[j]) {
                j += 1;
                while j < bytes.len() && is_ident_continue(bytes[j]) {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'>' {
                    out.push(Placeholder { name: &text[i + 1..j], start: i, end: j + 1 });
                    i = j + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    out
}

/// Names of all placeholders in `text`.
pub fn placeholder_names(text: &str) -> BTreeSet<String> {
    placeholders(text).into_iter().map(|p| p.name.to_string()).collect()
}

/// Replaces each placeholder for which `lookup` returns a value. Single pass:
/// replacement text is not scanned again.
pub fn substitute<F>(text: &str, mut lookup: F) -> String
where
    F: FnMut(&str) -> Option<String>,
{
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for p in placeholders(text) {
        if let Some(value) = lookup(p.name) {
            out.push_str(&text[last..p.start]);
            out.push_str(&value);
            last = p.end;
        }
    }
    out.push_str(&text[last..]);
    out
}

/// Renders a binding anchor such as `sUAS<x>` into a binding key such as
/// `sUAS_1`. A value glued to a preceding alphanumeric gets a `_` separator.
pub fn render_binding_key<F>(anchor: &str, mut lookup: F) -> String
where
    F: FnMut(&str) -> Option<String>,
{
    let mut out = String::with_capacity(anchor.len() + 2);
    let mut last = 0;
    for p in placeholders(anchor) {
        let Some(value) = lookup(p.name) else { continue };
        out.push_str(&anchor[last..p.start]);
        if out.chars().last().is_some_and(|c| c.is_ascii_alphanumeric()) {
            out.push('_');
        }
        out.push_str(&value);
        last = p.end;
    }
    out.push_str(&anchor[last..]);
    out
}

/// Index variables referenced by a step id. Besides `<x>` placeholders, a
/// bare alphabetic run equal to a variable name counts (`1x.2` references
/// `x`), matching the spreadsheet convention.
pub fn step_id_variables(step_id: &str, index_vars: &BTreeSet<String>) -> BTreeSet<String> {
    let mut found = placeholder_names(step_id);
    found.retain(|v| index_vars.contains(v));
    let stripped = substitute(step_id, |_| Some(String::from(".")));
    for run in alpha_runs(&stripped) {
        if index_vars.contains(run.1) {
            found.insert(run.1.to_string());
        }
    }
    found
}

/// Substitutes index variables into a step id (both `<x>` and bare `x`).
pub fn substitute_step_id<F>(step_id: &str, mut lookup: F) -> String
where
    F: FnMut(&str) -> Option<String>,
{
    let with_placeholders = substitute(step_id, &mut lookup);
    let mut out = String::with_capacity(with_placeholders.len());
    let mut last = 0;
    for (start, run) in alpha_runs(&with_placeholders) {
        if let Some(value) = lookup(run) {
            out.push_str(&with_placeholders[last..start]);
            out.push_str(&value);
            last = start + run.len();
        }
    }
    out.push_str(&with_placeholders[last..]);
    out
}

fn alpha_runs(s: &str) -> Vec<(usize, &str)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        match (c.is_ascii_alphabetic() || c == '_', start) {
            (true, None) => start = Some(i),
            (false, Some(st)) => {
                runs.push((st, &s[st..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(st) = start {
        runs.push((st, &s[st..]));
    }
    runs
}

/// Canonical identity of a condition text: lowercase outside placeholders,
/// whitespace runs collapsed to one space, trailing periods removed.
pub fn normalize_condition(raw: &str) -> Result<String, ModelError> {
    let mut lowered = String::with_capacity(raw.len());
    let mut last = 0;
    for p in placeholders(raw) {
        lowered.extend(raw[last..p.start].chars().flat_map(char::to_lowercase));
        lowered.push_str(&raw[p.start..p.end]);
        last = p.end;
    }
    lowered.extend(raw[last..].chars().flat_map(char::to_lowercase));

    let mut out = String::with_capacity(lowered.len());
    for word in lowered.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    while out.ends_with('.') || out.ends_with(' ') {
        out.pop();
    }
    if out.is_empty() {
        return Err(ModelError::EmptyCondition(raw.to_string()));
    }
    Ok(out)
}
