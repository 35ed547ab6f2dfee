//! Loading scenarios, sub-processes and suites from disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::compiler::{self, Compilation, CompileOptions, LintReport, SuiteFailure};
use crate::diagnostic::{DiagCode, Diagnostic, ParseResult, SourceSpan};
use crate::dsl::{self, SuiteDecl};
use crate::model::{ScenarioTemplate, SubProcessDef, Suite};

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}", render(.0))]
    Diagnostics(Vec<Diagnostic>),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().filter(|d| d.is_error()).map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

/// Every scenario, sub-process and suite found in a set of files, with
/// `import` lines and suite `include` paths followed.
#[derive(Debug, Default)]
pub struct Library {
    pub scenarios: BTreeMap<String, ScenarioTemplate>,
    pub subprocesses: Vec<SubProcessDef>,
    /// Suites with the directory their relative includes resolve against.
    pub suites: Vec<(PathBuf, SuiteDecl)>,
    /// Loaded file → ids of the scenarios it defines.
    files: BTreeMap<PathBuf, Vec<String>>,
    /// Scenario id → defining file (or pseudo-name for in-memory sources).
    origins: BTreeMap<String, String>,
    warnings: Vec<Diagnostic>,
}

impl Library {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads each path (and whatever it imports).
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self, LibraryError> {
        let mut lib = Library::new();
        for p in paths {
            lib.load_file(p.as_ref())?;
        }
        Ok(lib)
    }

    pub fn warnings(&self) -> &[Diagnostic] {
        &self.warnings
    }

    pub fn subprocess(&self, name: &str) -> Option<&SubProcessDef> {
        self.subprocesses.iter().find(|d| d.name == name)
    }

    /// Loads one `.fits` or `.csv` file. Already-loaded files are skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), LibraryError> {
        let key = fs::canonicalize(path).map_err(|source| LibraryError::Io { path: path.to_path_buf(), source })?;
        if self.files.contains_key(&key) {
            return Ok(());
        }
        let source = fs::read_to_string(&key).map_err(|source| LibraryError::Io { path: path.to_path_buf(), source })?;
        let display = path.display().to_string();
        let dir = key.parent().map(Path::to_path_buf).unwrap_or_default();
        self.files.insert(key.clone(), Vec::new());

        if key.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let stem = key.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
            let parsed = dsl::import_csv_template(&source, &display, stem).map_err(LibraryError::Diagnostics)?;
            self.warnings.extend(parsed.warnings);
            self.add_scenario(parsed.value, &display, Some(&key))?;
            return Ok(());
        }

        let (doc, diags) = dsl::parse_document(&source, &display);
        if diags.iter().any(Diagnostic::is_error) {
            return Err(LibraryError::Diagnostics(diags));
        }
        self.warnings.extend(diags);
        for (import, span) in &doc.imports {
            self.load_file(&dir.join(import)).map_err(|e| match e {
                LibraryError::Io { path, source } => LibraryError::Diagnostics(vec![Diagnostic::error(
                    DiagCode::UnresolvedReference,
                    span.clone(),
                    format!("cannot import {}: {source}", path.display()),
                )]),
                other => other,
            })?;
        }
        for def in doc.subprocesses {
            self.add_subprocess(def, &display)?;
        }
        for scenario in doc.scenarios {
            self.add_scenario(scenario, &display, Some(&key))?;
        }
        for suite in doc.suites {
            for (reference, _) in &suite.entries {
                let candidate = dir.join(reference);
                if looks_like_path(reference) && candidate.is_file() {
                    self.load_file(&candidate)?;
                }
            }
            self.suites.push((dir.clone(), suite));
        }
        Ok(())
    }

    /// Adds everything in an in-memory `.fits` source; imports are ignored.
    pub fn add_source(&mut self, source: &str, name: &str) -> Result<(), LibraryError> {
        let (doc, diags) = dsl::parse_document(source, name);
        if diags.iter().any(Diagnostic::is_error) {
            return Err(LibraryError::Diagnostics(diags));
        }
        self.warnings.extend(diags);
        for def in doc.subprocesses {
            self.add_subprocess(def, name)?;
        }
        for scenario in doc.scenarios {
            self.add_scenario(scenario, name, None)?;
        }
        for suite in doc.suites {
            self.suites.push((PathBuf::new(), suite));
        }
        Ok(())
    }

    pub fn add_subprocess(&mut self, def: SubProcessDef, origin: &str) -> Result<(), LibraryError> {
        if self.subprocess(&def.name).is_some_and(|d| *d != def) {
            return Err(LibraryError::Diagnostics(vec![Diagnostic::error(
                DiagCode::DuplicateScenario,
                SourceSpan::new(origin, 1, 1, 1),
                format!("sub-process {} is defined twice", def.name),
            )]));
        }
        if self.subprocess(&def.name).is_none() {
            self.subprocesses.push(def);
        }
        Ok(())
    }

    pub fn add_scenario(
        &mut self,
        scenario: ScenarioTemplate,
        origin: &str,
        file: Option<&Path>,
    ) -> Result<(), LibraryError> {
        if let Some(prev) = self.origins.get(&scenario.id) {
            return Err(LibraryError::Diagnostics(vec![Diagnostic::error(
                DiagCode::DuplicateScenario,
                SourceSpan::new(origin, 1, 1, 1),
                format!("duplicate scenario id {} (also defined in {prev})", scenario.id),
            )]));
        }
        if let Some(file) = file {
            self.files.entry(file.to_path_buf()).or_default().push(scenario.id.clone());
        }
        self.origins.insert(scenario.id.clone(), origin.to_string());
        self.scenarios.insert(scenario.id.clone(), scenario);
        Ok(())
    }

    /// Maps a suite reference to a scenario id: a file defining exactly one
    /// scenario, or a scenario id.
    pub fn resolve_reference(&self, base: &Path, reference: &str) -> Option<String> {
        if let Ok(path) = fs::canonicalize(base.join(reference)) {
            if let Some(ids) = self.files.get(&path) {
                return (ids.len() == 1).then(|| ids[0].clone());
            }
        }
        self.scenarios.contains_key(reference).then(|| reference.to_string())
    }

    /// Resolves every loaded suite.
    pub fn resolved_suites(&self) -> Vec<ParseResult<Suite>> {
        self.suites
            .iter()
            .map(|(base, decl)| {
                dsl::resolve_suite_decl(vec![decl.clone()], Vec::new(), |r| self.resolve_reference(base, r))
            })
            .collect()
    }

    pub fn lint(&self, scenario_id: &str, options: &CompileOptions) -> Option<LintReport> {
        self.scenarios.get(scenario_id).map(|t| compiler::lint_with(t, &self.subprocesses, options))
    }

    pub fn compile(&self, scenario_id: &str, options: &CompileOptions) -> Option<Result<Compilation, LintReport>> {
        self.scenarios.get(scenario_id).map(|t| compiler::compile(t, &self.subprocesses, options))
    }

    pub fn compile_suite(&self, suite: &Suite, options: &CompileOptions) -> Result<Vec<Compilation>, SuiteFailure> {
        compiler::compile_suite(suite, &self.scenarios, &self.subprocesses, options)
    }
}

fn looks_like_path(reference: &str) -> bool {
    reference.ends_with(".fits") || reference.ends_with(".csv") || reference.contains('/')
}
