//! Source locations and parser diagnostics.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: String,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    /// In characters.
    pub length: usize,
}

impl SourceSpan {
    pub fn new(file: impl Into<String>, line: usize, column: usize, length: usize) -> Self {
        SourceSpan { file: file.into(), line: line.max(1), column: column.max(1), length }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagCode {
    ExpectedDeclaration,
    UnknownKeyword,
    DuplicateStepId,
    UndeclaredVariable,
    MissingWhen,
    MissingDataSpec,
    UndeclaredParam,
    StepOutsideBody,
    EmptySubprocess,
    InvalidValue,
    DuplicateClause,
    UndeclaredPhase,
    MissingColumn,
    MalformedParams,
    UnknownTypeCode,
    UnresolvedReference,
    DuplicateScenario,
    NoSteps,
    EmptySuite,
    UnusedParam,
    MappedTypeCode,
}

impl DiagCode {
    /// Stable short code shown to users.
    pub fn as_str(self) -> &'static str {
        use DiagCode::*;
        match self {
            ExpectedDeclaration => "E001",
            UnknownKeyword => "E002",
            DuplicateStepId => "E003",
            UndeclaredVariable => "E004",
            MissingWhen => "E005",
            MissingDataSpec => "E006",
            UndeclaredParam => "E007",
            StepOutsideBody => "E008",
            EmptySubprocess => "E009",
            InvalidValue => "E010",
            DuplicateClause => "E011",
            UndeclaredPhase => "E012",
            MissingColumn => "E020",
            MalformedParams => "E021",
            UnknownTypeCode => "E022",
            UnresolvedReference => "E030",
            DuplicateScenario => "E031",
            NoSteps => "W001",
            EmptySuite => "W002",
            UnusedParam => "W003",
            MappedTypeCode => "W004",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub severity: Severity,
    pub message: String,
    pub span: SourceSpan,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic { code, severity: Severity::Error, message: message.into(), span }
    }

    pub fn warning(code: DiagCode, span: SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic { code, severity: Severity::Warning, message: message.into(), span }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}[{}]: {}", self.span, self.severity, self.code.as_str(), self.message)
    }
}

/// A successful parse together with any warnings it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<Diagnostic>,
}

pub type ParseResult<T> = Result<Parsed<T>, Vec<Diagnostic>>;

/// Splits diagnostics into success (no errors) or failure.
pub(crate) fn finish<T>(value: T, diagnostics: Vec<Diagnostic>) -> ParseResult<T> {
    if diagnostics.iter().any(Diagnostic::is_error) {
        Err(diagnostics)
    } else {
        Ok(Parsed { value, warnings: diagnostics })
    }
}
