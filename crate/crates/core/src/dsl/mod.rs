//! The `.fits` scenario language and the spreadsheet (CSV) importer.
//!
//! ```text
//! scenario TC01 "Multi-sUAS Synchronized Takeoff"
//!   primary: mission_commander, sUAS
//!   supporting: pilot_1, pilot_2, pilot_3
//!   var x in 1..3
//!   binding pilot in pilot_1, pilot_2, pilot_3
//!
//!   step 1x.1
//!     given external: sUAS<x> is available at test site.
//!     when: RPIC(sUAS<x>→<pilot>) shall place sUAS<x> in its launch location.
//!     then: sUAS<x> is placed in its launch position.
//!     type: TE
//!     responsible: sUAS<x> -> <pilot>
//! ```

pub(crate) mod clauses;
mod csv_import;
mod parser;
mod printer;

use std::collections::BTreeMap;

pub use csv_import::import_csv_template;
pub use parser::{parse_document, Document, SuiteDecl};
pub use printer::{print_scenario, print_subprocess, print_suite};

use crate::diagnostic::{finish, DiagCode, Diagnostic, ParseResult, SourceSpan};
use crate::model::{ScenarioTemplate, SubProcessDef, Suite, SuiteEntry};

const INPUT: &str = "<input>";

fn first_line_span() -> SourceSpan {
    SourceSpan::new(INPUT, 1, 1, 1)
}

/// Parses a source holding exactly one scenario (sub-process blocks and
/// imports alongside it are ignored here).
pub fn parse_scenario(source: &str) -> ParseResult<ScenarioTemplate> {
    let (mut doc, mut diags) = parse_document(source, INPUT);
    if doc.scenarios.is_empty() {
        if diags.iter().any(Diagnostic::is_error) {
            return Err(diags);
        }
        return Err(vec![Diagnostic::error(
            DiagCode::ExpectedDeclaration,
            first_line_span(),
            "expected scenario declaration",
        )]);
    }
    if doc.scenarios.len() > 1 {
        diags.push(Diagnostic::error(
            DiagCode::ExpectedDeclaration,
            first_line_span(),
            format!("expected one scenario, found {}", doc.scenarios.len()),
        ));
    }
    finish(doc.scenarios.swap_remove(0), diags)
}

/// Parses a source holding exactly one sub-process definition.
pub fn parse_subprocess(source: &str) -> ParseResult<SubProcessDef> {
    let (mut doc, mut diags) = parse_document(source, INPUT);
    if doc.subprocesses.is_empty() {
        if diags.iter().any(Diagnostic::is_error) {
            return Err(diags);
        }
        return Err(vec![Diagnostic::error(
            DiagCode::ExpectedDeclaration,
            first_line_span(),
            "expected subprocess declaration",
        )]);
    }
    if doc.subprocesses.len() > 1 {
        diags.push(Diagnostic::error(
            DiagCode::ExpectedDeclaration,
            first_line_span(),
            format!("expected one sub-process, found {}", doc.subprocesses.len()),
        ));
    }
    finish(doc.subprocesses.swap_remove(0), diags)
}

/// Parses a suite and resolves each `include` through `resolve`, which maps a
/// reference (path or id) to the scenario id it denotes.
pub fn parse_suite<F>(source: &str, resolve: F) -> ParseResult<Suite>
where
    F: FnMut(&str) -> Option<String>,
{
    let (doc, diags) = parse_document(source, INPUT);
    resolve_suite_decl(doc.suites, diags, resolve)
}

pub(crate) fn resolve_suite_decl<F>(
    mut suites: Vec<SuiteDecl>,
    mut diags: Vec<Diagnostic>,
    mut resolve: F,
) -> ParseResult<Suite>
where
    F: FnMut(&str) -> Option<String>,
{
    if suites.is_empty() {
        if !diags.iter().any(Diagnostic::is_error) {
            diags.push(Diagnostic::error(DiagCode::ExpectedDeclaration, first_line_span(), "expected suite declaration"));
        }
        return Err(diags);
    }
    let decl = suites.swap_remove(0);
    let mut suite = Suite { name: decl.name, entries: Vec::new() };
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for (reference, span) in decl.entries {
        let Some(id) = resolve(&reference) else {
            diags.push(Diagnostic::error(DiagCode::UnresolvedReference, span, format!("cannot resolve scenario `{reference}`")));
            continue;
        };
        if seen.insert(id.clone(), reference.clone()).is_some() {
            diags.push(Diagnostic::error(DiagCode::DuplicateScenario, span, format!("duplicate scenario id {id}")));
            continue;
        }
        suite.entries.push(SuiteEntry { reference, scenario_id: id });
    }
    if suite.entries.is_empty() && !diags.iter().any(Diagnostic::is_error) {
        diags.push(Diagnostic::warning(DiagCode::EmptySuite, decl.span, "empty suite"));
    }
    finish(suite, diags)
}
