//! Mission packages: the JSON form of a compiled task graph, and the
//! engine's only input.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ConditionDecl, TaskGraph, TaskNode};

pub const PACKAGE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("malformed mission package: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported package version {0} (expected {PACKAGE_VERSION})")]
    Version(u32),
    #[error("invalid mission package: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Field order here is the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPackage {
    pub version: u32,
    pub mission_template_id: String,
    pub name: String,
    pub actors: Vec<String>,
    pub phases: Vec<String>,
    pub tasks: Vec<TaskNode>,
    pub conditions: Vec<ConditionDecl>,
    pub bindings_required: Vec<String>,
}

impl MissionPackage {
    pub fn from_graph(graph: &TaskGraph) -> Self {
        MissionPackage {
            version: PACKAGE_VERSION,
            mission_template_id: graph.mission_template_id.clone(),
            name: graph.name.clone(),
            actors: graph.actors.clone(),
            phases: graph.phases.clone(),
            tasks: graph.tasks.clone(),
            conditions: graph.conditions.clone(),
            bindings_required: graph.bindings_required().into_iter().collect(),
        }
    }

    pub fn graph(&self) -> TaskGraph {
        let mut conditions = self.conditions.clone();
        conditions.sort();
        TaskGraph {
            mission_template_id: self.mission_template_id.clone(),
            name: self.name.clone(),
            actors: self.actors.clone(),
            phases: self.phases.clone(),
            tasks: self.tasks.clone(),
            conditions,
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("package serializes");
        out.push('\n');
        out
    }

    /// Parses and validates a package.
    pub fn from_json(text: &str) -> Result<Self, PackageError> {
        let pkg: MissionPackage = serde_json::from_str(text)?;
        if pkg.version != PACKAGE_VERSION {
            return Err(PackageError::Version(pkg.version));
        }
        let violations = pkg.graph().invariant_violations();
        if !violations.is_empty() {
            return Err(PackageError::Invalid(violations));
        }
        Ok(pkg)
    }

    /// `<mission_template_id>.pkg.json`
    pub fn file_name(&self) -> String {
        format!("{}.pkg.json", self.mission_template_id)
    }
}
