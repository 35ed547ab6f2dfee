//! Line-oriented parser for `.fits` files.
//!
//! A file holds any number of `scenario`, `subprocess` and `suite` blocks plus
//! top-level `import` lines. Indentation is cosmetic: the keyword at the start
//! of a line decides where it belongs. Lines starting with `#` are comments.

use std::collections::{BTreeMap, BTreeSet};

use super::clauses::{self, TypeCode};
use crate::diagnostic::{DiagCode, Diagnostic, SourceSpan};
use crate::model::{
    ConditionKind, ConditionText, ScenarioTemplate, StepTemplate, StepType, SubProcessDef,
    SubprocessCall, VariableKind,
};
use crate::text::{self, is_identifier};

/// Everything found in one source file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub scenarios: Vec<ScenarioTemplate>,
    pub subprocesses: Vec<SubProcessDef>,
    pub suites: Vec<SuiteDecl>,
    pub imports: Vec<(String, SourceSpan)>,
}

/// A suite block before its references are resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteDecl {
    pub name: String,
    pub span: SourceSpan,
    pub entries: Vec<(String, SourceSpan)>,
}

const STEP_CLAUSES: [&str; 9] =
    ["given", "when", "then", "type", "responsible", "priority", "phase", "duration", "data"];

struct Line<'a> {
    number: usize,
    text: &'a str,
}

impl Line<'_> {
    fn offset_of(&self, sub: &str) -> usize {
        let start = self.text.as_ptr() as usize;
        let at = sub.as_ptr() as usize;
        if at >= start && at <= start + self.text.len() {
            at - start
        } else {
            0
        }
    }

    fn span_of(&self, file: &str, sub: &str) -> SourceSpan {
        let off = self.offset_of(sub);
        let column = self.text[..off].chars().count() + 1;
        SourceSpan::new(file, self.number, column, sub.chars().count().max(1))
    }
}

#[derive(Default)]
struct StepState {
    step: Option<StepTemplate>,
    span: Option<SourceSpan>,
    seen: BTreeSet<&'static str>,
    type_span: Option<SourceSpan>,
    data_span: Option<SourceSpan>,
}

/// A variable or phase use waiting for end-of-block validation.
struct Reference {
    name: String,
    span: SourceSpan,
}

struct BlockState {
    kind: BlockKind,
    header: SourceSpan,
    step_spans: Vec<SourceSpan>,
    step_meta: Vec<(Option<SourceSpan>, Option<SourceSpan>)>,
    var_refs: Vec<Reference>,
    phase_refs: Vec<Reference>,
}

enum BlockKind {
    Scenario(ScenarioTemplate),
    Subprocess(SubProcessDef),
    Suite(SuiteDecl),
}

struct Parser<'f> {
    file: &'f str,
    doc: Document,
    diags: Vec<Diagnostic>,
    block: Option<BlockState>,
    step: StepState,
}

/// Parses a whole `.fits` source. Never panics; problems become diagnostics.
pub fn parse_document(source: &str, file: &str) -> (Document, Vec<Diagnostic>) {
    let mut p = Parser { file, doc: Document::default(), diags: Vec::new(), block: None, step: StepState::default() };
    for (i, raw) in source.split('\n').enumerate() {
        let text = raw.strip_suffix('\r').unwrap_or(raw);
        p.line(&Line { number: i + 1, text });
    }
    p.close_block();
    (p.doc, p.diags)
}

impl<'f> Parser<'f> {
    fn err(&mut self, code: DiagCode, span: SourceSpan, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(code, span, msg));
    }

    fn warn(&mut self, code: DiagCode, span: SourceSpan, msg: impl Into<String>) {
        self.diags.push(Diagnostic::warning(code, span, msg));
    }

    fn line(&mut self, line: &Line<'_>) {
        let trimmed = line.text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return;
        }
        let kw_len = trimmed
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(trimmed.len());
        let keyword = &trimmed[..kw_len];
        let rest = &trimmed[kw_len..];
        let kw_span = line.span_of(self.file, if keyword.is_empty() { trimmed } else { keyword });

        match keyword {
            "import" => self.import(line, rest, kw_span),
            "scenario" => self.open_scenario(line, rest, kw_span),
            "subprocess" => self.open_subprocess(line, rest, kw_span),
            "suite" => self.open_suite(line, rest, kw_span),
            "include" => self.include(line, rest, kw_span),
            "step" => self.open_step(line, rest, kw_span),
            "var" | "binding" => self.variable(line, trimmed, kw_span),
            "uses" => self.uses(line, rest, kw_span),
            "description" | "primary" | "supporting" | "phases" => {
                self.setup_clause(line, keyword, rest, kw_span)
            }
            "given" | "when" | "then" | "type" | "responsible" | "priority" | "phase" | "duration"
            | "data" => {
                let clause = STEP_CLAUSES.iter().copied().find(|c| *c == keyword).unwrap_or("data");
                self.step_clause(line, clause, rest, kw_span)
            }
            _ => self.err(
                DiagCode::UnknownKeyword,
                kw_span,
                format!("unknown keyword `{}`", if keyword.is_empty() { trimmed } else { keyword }),
            ),
        }
    }

    fn import(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        let path = rest.trim();
        if path.is_empty() {
            self.err(DiagCode::InvalidValue, kw_span, "import needs a path");
            return;
        }
        let path = clauses::take_quoted(path).map(|(p, _)| p).unwrap_or_else(|| path.to_string());
        let span = line.span_of(self.file, rest.trim());
        self.doc.imports.push((path, span));
    }

    fn open_scenario(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        self.close_block();
        let rest = rest.trim();
        let (id, tail) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        if id.is_empty() {
            self.err(DiagCode::ExpectedDeclaration, kw_span.clone(), "scenario needs an id");
        }
        let tail = tail.trim();
        let name = if tail.is_empty() {
            id.to_string()
        } else {
            match clauses::take_quoted(tail) {
                Some((name, after)) if after.trim().is_empty() => name,
                _ => {
                    self.err(DiagCode::InvalidValue, line.span_of(self.file, tail), "scenario name must be a quoted string");
                    tail.to_string()
                }
            }
        };
        self.block = Some(BlockState::new(BlockKind::Scenario(ScenarioTemplate::new(id, name)), kw_span));
    }

    fn open_subprocess(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        self.close_block();
        let rest = rest.trim();
        let (name, params) = match rest.split_once('(') {
            Some((name, tail)) => match tail.trim_end().strip_suffix(')') {
                Some(inner) => (name.trim(), Some(inner)),
                None => {
                    self.err(DiagCode::InvalidValue, line.span_of(self.file, rest), "unterminated parameter list");
                    (name.trim(), None)
                }
            },
            None => (rest, Some("")),
        };
        if !is_identifier(name) {
            self.err(DiagCode::ExpectedDeclaration, kw_span.clone(), format!("`{name}` is not a valid sub-process name"));
        }
        let mut list = Vec::new();
        for p in params.unwrap_or("").split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let p = p.trim_start_matches('<').trim_end_matches('>');
            if is_identifier(p) {
                list.push(p.to_string());
            } else {
                self.err(DiagCode::InvalidValue, line.span_of(self.file, p), format!("`{p}` is not a valid parameter name"));
            }
        }
        let def = SubProcessDef { name: name.to_string(), params: list, steps: Vec::new() };
        self.block = Some(BlockState::new(BlockKind::Subprocess(def), kw_span));
    }

    fn open_suite(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        self.close_block();
        let rest = rest.trim();
        let name = clauses::take_quoted(rest).map(|(n, _)| n).unwrap_or_else(|| rest.to_string());
        if name.is_empty() {
            self.err(DiagCode::ExpectedDeclaration, kw_span.clone(), "suite needs a name");
        }
        let _ = line;
        let decl = SuiteDecl { name, span: kw_span.clone(), entries: Vec::new() };
        self.block = Some(BlockState::new(BlockKind::Suite(decl), kw_span));
    }

    fn include(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        let reference = rest.trim();
        let reference_span = line.span_of(self.file, reference);
        let reference = clauses::take_quoted(reference).map(|(r, _)| r).unwrap_or_else(|| reference.to_string());
        match self.block.as_mut().map(|b| &mut b.kind) {
            Some(BlockKind::Suite(decl)) if !reference.is_empty() => decl.entries.push((reference, reference_span)),
            Some(BlockKind::Suite(_)) => self.err(DiagCode::InvalidValue, kw_span, "include needs a reference"),
            _ => self.err(DiagCode::UnknownKeyword, kw_span, "`include` is only valid inside a suite"),
        }
    }

    fn variable(&mut self, line: &Line<'_>, trimmed: &str, kw_span: SourceSpan) {
        let Some(BlockKind::Scenario(_)) = self.block.as_ref().map(|b| &b.kind) else {
            self.err(DiagCode::UnknownKeyword, kw_span, "variables are declared inside a scenario");
            return;
        };
        match clauses::parse_variable(trimmed) {
            Ok(var) => {
                if let Some(BlockKind::Scenario(s)) = self.block.as_mut().map(|b| &mut b.kind) {
                    s.variables.push(var);
                }
            }
            Err(msg) => self.err(DiagCode::InvalidValue, line.span_of(self.file, trimmed), msg),
        }
    }

    fn setup_clause(&mut self, line: &Line<'_>, keyword: &str, rest: &str, kw_span: SourceSpan) {
        let Some(value) = rest.trim_start().strip_prefix(':') else {
            self.err(DiagCode::InvalidValue, kw_span, format!("expected `:` after {keyword}"));
            return;
        };
        let value = value.trim();
        let Some(BlockKind::Scenario(s)) = self.block.as_mut().map(|b| &mut b.kind) else {
            self.err(DiagCode::UnknownKeyword, kw_span, format!("`{keyword}` is only valid in a scenario header"));
            return;
        };
        let list = || value.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect::<Vec<_>>();
        match keyword {
            "description" => s.description = value.to_string(),
            "primary" => s.primary_actors = list(),
            "supporting" => s.supporting_actors = list(),
            _ => s.phases = list(),
        }
        let _ = line;
    }

    fn open_step(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        self.flush_step();
        let id = rest.trim();
        if self.block.as_ref().map_or(true, |b| matches!(b.kind, BlockKind::Suite(_))) {
            self.err(DiagCode::StepOutsideBody, kw_span, "step outside a scenario or sub-process body");
            return;
        }
        if id.is_empty() || id.contains(char::is_whitespace) {
            self.err(DiagCode::InvalidValue, kw_span.clone(), "step needs a single-word id");
        }
        let span = if id.is_empty() { kw_span } else { line.span_of(self.file, id) };
        self.note_refs(line, id);
        self.step = StepState {
            step: Some(StepTemplate::new(id, "")),
            span: Some(span),
            ..StepState::default()
        };
    }

    fn uses(&mut self, line: &Line<'_>, rest: &str, kw_span: SourceSpan) {
        if self.step.step.is_none() {
            self.err(DiagCode::StepOutsideBody, kw_span, "`uses` outside a step");
            return;
        }
        let rest = rest.trim();
        let parsed = (|| {
            let (name, tail) = rest.split_once('(').unwrap_or((rest, ")"));
            let inner = tail.trim_end().strip_suffix(')').ok_or("unterminated parameter list")?;
            let name = name.trim();
            if !is_identifier(name) {
                return Err(format!("`{name}` is not a valid sub-process name"));
            }
            let mut params = BTreeMap::new();
            for item in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (key, value) = item.split_once('=').ok_or_else(|| format!("parameter `{item}` needs `name = value`"))?;
                let key = key.trim();
                if !is_identifier(key) {
                    return Err(format!("`{key}` is not a valid parameter name"));
                }
                if params.insert(key.to_string(), clauses::parse_binding_expr(value)?).is_some() {
                    return Err(format!("parameter {key} passed twice"));
                }
            }
            Ok(SubprocessCall { name: name.to_string(), params })
        })();
        match parsed {
            Ok(call) => {
                if self.mark_seen("uses") {
                    self.err(DiagCode::DuplicateClause, kw_span, "step already uses a sub-process");
                    return;
                }
                self.note_refs(line, rest);
                if let Some(step) = self.step.step.as_mut() {
                    step.subprocess = Some(call);
                }
            }
            Err(msg) => self.err(DiagCode::InvalidValue, line.span_of(self.file, rest), msg),
        }
    }

    fn mark_seen(&mut self, clause: &'static str) -> bool {
        !self.step.seen.insert(clause)
    }

    /// Records placeholder uses on this line for end-of-block validation.
    fn note_refs(&mut self, line: &Line<'_>, value: &str) {
        let Some(block) = self.block.as_mut() else { return };
        for p in text::placeholders(value) {
            let sub = &value[p.start..p.end];
            block.var_refs.push(Reference { name: p.name.to_string(), span: line.span_of(self.file, sub) });
        }
    }

    fn step_clause(&mut self, line: &Line<'_>, keyword: &'static str, rest: &str, kw_span: SourceSpan) {
        let rest_trim = rest.trim_start();
        let (external, after_kw) = match rest_trim.strip_prefix("external") {
            Some(after) if keyword == "given" => (true, after.trim_start()),
            _ => (false, rest_trim),
        };
        let Some(value) = after_kw.strip_prefix(':') else {
            self.err(DiagCode::InvalidValue, kw_span, format!("expected `:` after {keyword}"));
            return;
        };
        let value = value.trim();
        if self.step.step.is_none() {
            self.err(DiagCode::StepOutsideBody, kw_span, format!("`{keyword}` outside a step"));
            return;
        }
        let value_span = line.span_of(self.file, if value.is_empty() { rest } else { value });
        let repeatable = matches!(keyword, "given" | "then");
        if !repeatable && self.mark_seen(keyword) {
            self.err(DiagCode::DuplicateClause, kw_span, format!("duplicate `{keyword}` clause"));
            return;
        }
        if value.is_empty() {
            self.err(DiagCode::InvalidValue, value_span, format!("`{keyword}` needs a value"));
            return;
        }

        let result: Result<(), String> = match keyword {
            "given" | "then" | "when" => {
                self.note_refs(line, value);
                let step = self.step.step.as_mut().expect("checked above");
                match keyword {
                    "given" => step.given.push(ConditionText {
                        raw: value.to_string(),
                        kind: if external { ConditionKind::External } else { ConditionKind::Internal },
                    }),
                    "then" => step.then.push(ConditionText::internal(value)),
                    _ => step.when = value.to_string(),
                }
                Ok(())
            }
            "type" => clauses::parse_type_code(value).map(|code| {
                if code == TypeCode::ManualConfirmation {
                    self.diags.push(Diagnostic::warning(
                        DiagCode::MappedTypeCode,
                        value_span.clone(),
                        "type code PC (M) treated as a manually confirmed TE step",
                    ));
                }
                self.step.type_span = Some(value_span.clone());
                self.step.step.as_mut().expect("checked").step_type = code.step_type();
            }),
            "responsible" => clauses::parse_role(value).map(|role| {
                self.note_refs(line, value);
                self.step.step.as_mut().expect("checked").responsible = Some(role);
            }),
            "priority" => value
                .parse::<u8>()
                .ok()
                .and_then(crate::model::Priority::new)
                .map(|p| self.step.step.as_mut().expect("checked").priority = Some(p))
                .ok_or_else(|| format!("priority `{value}` must be an integer 1..5")),
            "phase" => {
                if let Some(block) = self.block.as_mut() {
                    block.phase_refs.push(Reference { name: value.to_string(), span: value_span.clone() });
                }
                self.step.step.as_mut().expect("checked").phase = Some(value.to_string());
                Ok(())
            }
            "duration" => clauses::parse_duration(value)
                .map(|secs| self.step.step.as_mut().expect("checked").duration_limit = Some(secs)),
            _ => clauses::parse_data_spec(value).map(|spec| {
                self.step.data_span = Some(value_span.clone());
                self.step.step.as_mut().expect("checked").data_spec = Some(spec);
            }),
        };
        if let Err(msg) = result {
            self.err(DiagCode::InvalidValue, value_span, msg);
        }
    }

    fn flush_step(&mut self) {
        let state = std::mem::take(&mut self.step);
        let (Some(step), Some(span)) = (state.step, state.span) else { return };
        let Some(block) = self.block.as_mut() else { return };
        match &mut block.kind {
            BlockKind::Scenario(s) => s.steps.push(step),
            BlockKind::Subprocess(d) => d.steps.push(step),
            BlockKind::Suite(_) => return,
        }
        block.step_spans.push(span);
        block.step_meta.push((state.type_span, state.data_span));
    }

    fn close_block(&mut self) {
        self.flush_step();
        let Some(block) = self.block.take() else { return };
        let BlockState { kind, header, step_spans, step_meta, var_refs, phase_refs } = block;
        match kind {
            BlockKind::Scenario(mut s) => {
                clauses::resolve_bare_bindings(&mut s);
                let declared: BTreeSet<&str> = s.variables.iter().map(|v| v.name.as_str()).collect();
                for r in &var_refs {
                    if !declared.contains(r.name.as_str()) {
                        self.err(DiagCode::UndeclaredVariable, r.span.clone(), format!("undeclared variable <{}>", r.name));
                    }
                }
                for r in &phase_refs {
                    if !s.phases.iter().any(|p| p == &r.name) {
                        self.err(DiagCode::UndeclaredPhase, r.span.clone(), format!("undeclared phase {}", r.name));
                    }
                }
                self.check_variables(&s, &header);
                self.check_steps(&s.steps, &step_spans, &step_meta);
                if s.steps.is_empty() {
                    self.warn(DiagCode::NoSteps, header, format!("scenario {} has no steps", s.id));
                }
                self.doc.scenarios.push(s);
            }
            BlockKind::Subprocess(d) => {
                let params: BTreeSet<&str> = d.params.iter().map(String::as_str).collect();
                for r in &var_refs {
                    if !params.contains(r.name.as_str()) {
                        self.err(
                            DiagCode::UndeclaredParam,
                            r.span.clone(),
                            format!("parameter `{}` is not declared by {}", r.name, d.name),
                        );
                    }
                }
                if d.steps.is_empty() {
                    self.err(DiagCode::EmptySubprocess, header.clone(), format!("empty sub-process {}", d.name));
                }
                let used: BTreeSet<String> = d.steps.iter().flat_map(StepTemplate::referenced_names).collect();
                for p in &d.params {
                    if !used.contains(p) {
                        self.warn(DiagCode::UnusedParam, header.clone(), format!("parameter {p} of {} is never used", d.name));
                    }
                }
                self.check_steps(&d.steps, &step_spans, &step_meta);
                self.doc.subprocesses.push(d);
            }
            BlockKind::Suite(decl) => self.doc.suites.push(decl),
        }
    }

    fn check_variables(&mut self, s: &ScenarioTemplate, header: &SourceSpan) {
        let mut seen = BTreeSet::new();
        for v in &s.variables {
            if !seen.insert(&v.name) {
                self.err(DiagCode::InvalidValue, header.clone(), format!("variable <{}> declared twice", v.name));
            }
            if v.kind == VariableKind::Binding && v.domain.is_empty() {
                self.err(DiagCode::InvalidValue, header.clone(), format!("binding <{}> has no actors", v.name));
            }
        }
    }

    fn check_steps(
        &mut self,
        steps: &[StepTemplate],
        spans: &[SourceSpan],
        meta: &[(Option<SourceSpan>, Option<SourceSpan>)],
    ) {
        let mut ids = BTreeSet::new();
        for ((step, span), (type_span, data_span)) in steps.iter().zip(spans).zip(meta) {
            if !ids.insert(step.step_id.as_str()) {
                self.err(DiagCode::DuplicateStepId, span.clone(), format!("duplicate step id {}", step.step_id));
            }
            if step.when.is_empty() && step.subprocess.is_none() {
                self.err(DiagCode::MissingWhen, span.clone(), format!("step {} is missing a when-clause", step.step_id));
            }
            match (step.step_type, &step.data_spec) {
                (StepType::DataCollection, None) => self.err(
                    DiagCode::MissingDataSpec,
                    type_span.clone().unwrap_or_else(|| span.clone()),
                    format!("TD step {} requires data spec", step.step_id),
                ),
                (StepType::Execution, Some(_)) => self.err(
                    DiagCode::InvalidValue,
                    data_span.clone().unwrap_or_else(|| span.clone()),
                    format!("TE step {} cannot carry a data spec", step.step_id),
                ),
                _ => {}
            }
            for c in step.given.iter().chain(&step.then) {
                if c.id().is_err() {
                    self.err(DiagCode::InvalidValue, span.clone(), format!("step {} has an empty condition", step.step_id));
                }
            }
        }
    }
}

impl BlockState {
    fn new(kind: BlockKind, header: SourceSpan) -> Self {
        BlockState {
            kind,
            header,
            step_spans: Vec::new(),
            step_meta: Vec::new(),
            var_refs: Vec::new(),
            phase_refs: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crlf_and_comments() {
        let src = "# header\r\nscenario T1 \"Demo\"\r\n  step 1\r\n    when: do it\r\n";
        let (doc, diags) = parse_document(src, "t.fits");
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(doc.scenarios[0].steps[0].when, "do it");
    }

    #[test]
    fn unknown_keyword_has_span() {
        let (_, diags) = parse_document("scenario T1\n  stpe 1\n", "t.fits");
        assert_eq!(diags[0].code, DiagCode::UnknownKeyword);
        assert_eq!((diags[0].span.line, diags[0].span.column), (2, 3));
    }

    #[test]
    fn undeclared_variable_points_at_placeholder() {
        let (_, diags) = parse_document("scenario T1\nstep 1\n  when: arm sUAS<y>\n", "t.fits");
        let d = diags.iter().find(|d| d.code == DiagCode::UndeclaredVariable).unwrap();
        assert_eq!((d.span.line, d.span.column, d.span.length), (3, 17, 3));
    }

    #[test]
    fn duplicate_clause() {
        let (_, diags) = parse_document("scenario T1\nstep 1\n when: a\n when: b\n", "t.fits");
        assert!(diags.iter().any(|d| d.code == DiagCode::DuplicateClause));
    }
}
