use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("condition text is empty: {0:?}")]
    EmptyCondition(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("step {step} uses unknown sub-process {name}")]
    UnknownSubprocess { step: String, name: String },
    #[error("sub-process nesting deeper than {limit} at step {step} (probable recursion)")]
    NestingTooDeep { step: String, limit: usize },
    #[error("step {step} passes no value for parameter {param} of {subprocess}")]
    UnboundParam { step: String, subprocess: String, param: String },
    #[error("variable <{0}> has an empty domain")]
    EmptyDomain(String),
    #[error("duplicate task id {0}")]
    DuplicateTaskId(String),
    #[error("invalid template: {}", .0.join("; "))]
    InvalidTemplate(Vec<String>),
    #[error("invalid task graph: {}", .0.join("; "))]
    InvalidGraph(Vec<String>),
}
