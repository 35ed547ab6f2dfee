//! Seeded generators for property tests: random well-formed templates,
//! random lint-clean task graphs, and a random legal scheduler.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::json;

use crate::engine::{IssueSeverity, MissionState, TaskStatus, Timestamp};
use crate::model::{
    ConditionDecl, ConditionKind, ConditionText, DataSpec, DataType, Domain, Priority, Responsible, RoleExpr,
    ScenarioTemplate, StepTemplate, StepType, TaskGraph, TaskNode, TaskOrigin, Validation, VariableDecl,
    VariableKind, MISSION_COMMANDER,
};
use crate::sim::{valid_value, Action};

pub const ACTORS: [&str; 3] = ["pilot", "observer", "safety_inspector"];
const VAR_NAMES: [&str; 3] = ["u", "v", "w"];

fn random_domain<R: Rng>(rng: &mut R) -> Domain {
    let n = rng.gen_range(1..=3);
    if rng.gen_bool(0.5) {
        let start = rng.gen_range(0..3);
        Domain::Range { start, end: start + n - 1 }
    } else {
        Domain::Values((0..n).map(|i| format!("d{i}")).collect())
    }
}

fn random_spec<R: Rng>(rng: &mut R, field: String) -> DataSpec {
    let (datatype, validation) = match rng.gen_range(0..4) {
        0 => (DataType::Number, Some(Validation::Range { min: 0.0, max: 10.0 })),
        1 => (DataType::Integer, Some(Validation::Range { min: 1.0, max: 9.0 })),
        2 => (DataType::Boolean, None),
        _ => (DataType::Enum(vec!["A".into(), "B".into()]), None),
    };
    DataSpec { field_name: field, datatype, validation, telemetry_key: None }
}

/// A well-formed template with exactly `steps` steps over up to three
/// index variables. Every internal given copies an earlier step's
/// post-condition, so the compiled graph is acyclic and fully produced.
pub fn random_template<R: Rng>(rng: &mut R, steps: usize) -> ScenarioTemplate {
    let mut t = ScenarioTemplate::new("RND", "random scenario");
    t.primary_actors = ACTORS.iter().map(|s| s.to_string()).collect();
    let nvars = rng.gen_range(0..=VAR_NAMES.len());
    for name in &VAR_NAMES[..nvars] {
        t.variables.push(VariableDecl { name: name.to_string(), domain: random_domain(rng), kind: VariableKind::Index });
    }
    t.phases = vec!["setup".into(), "flight".into()];
    let mut produced: Vec<(BTreeSet<String>, String)> = Vec::new();
    for k in 0..steps {
        let vars: BTreeSet<String> =
            VAR_NAMES[..nvars].iter().filter(|_| rng.gen_bool(0.5)).map(|s| s.to_string()).collect();
        let suffix: String = vars.iter().map(|v| format!(".<{v}>")).collect();
        let placeholders: String = vars.iter().map(|v| format!(" <{v}>")).collect();
        let mut step = StepTemplate::new(format!("{}{suffix}", k + 1), format!("do thing {}{placeholders}", k + 1));
        let candidates: Vec<&(BTreeSet<String>, String)> = produced.iter().filter(|(pv, _)| pv.is_subset(&vars)).collect();
        let ngiven = rng.gen_range(0..=2);
        for _ in 0..ngiven {
            if !candidates.is_empty() && rng.gen_bool(0.7) {
                let (_, text) = candidates.choose(rng).expect("non-empty");
                step.given.push(ConditionText::internal(text.clone()));
            } else {
                step.given.push(ConditionText::external(format!("ready {}{placeholders}", rng.gen_range(0..3))));
            }
        }
        let then = format!("thing {} done{placeholders}", k + 1);
        step.then.push(ConditionText::internal(then.clone()));
        produced.push((vars, then));
        step.responsible = Some(RoleExpr::Role(ACTORS.choose(rng).expect("non-empty").to_string()));
        step.priority = Priority::new(rng.gen_range(1..=5));
        step.phase = Some(t.phases.choose(rng).expect("non-empty").clone());
        if rng.gen_bool(0.2) {
            step.step_type = StepType::DataCollection;
            step.data_spec = Some(random_spec(rng, format!("f{}", k + 1)));
        }
        if rng.gen_bool(0.3) {
            step.duration_limit = Some(rng.gen_range(1..=60));
        }
        t.steps.push(step);
    }
    t
}

/// A random acyclic task graph with `n` tasks. Conditions may have several
/// producers and several consumers; a few are external.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize) -> TaskGraph {
    let phases = vec!["setup".to_string(), "flight".to_string(), "recovery".to_string()];
    let mut tasks: Vec<TaskNode> = Vec::with_capacity(n);
    let mut conditions: BTreeMap<String, ConditionKind> = BTreeMap::new();
    let externals: Vec<String> = (0..rng.gen_range(1..=3)).map(|i| format!("external {i}")).collect();
    let mut internals: Vec<String> = Vec::new();
    for k in 0..n {
        let mut given = BTreeSet::new();
        for _ in 0..rng.gen_range(0..=2) {
            if !internals.is_empty() && rng.gen_bool(0.75) {
                given.insert(internals.choose(rng).expect("non-empty").clone());
            } else {
                let e = externals.choose(rng).expect("non-empty").clone();
                conditions.insert(e.clone(), ConditionKind::External);
                given.insert(e);
            }
        }
        // Sometimes re-produce an existing condition (OR across producers).
        let then = if !internals.is_empty() && rng.gen_bool(0.2) {
            let c = internals.choose(rng).expect("non-empty").clone();
            if given.contains(&c) {
                format!("c{k}")
            } else {
                c
            }
        } else {
            format!("c{k}")
        };
        if !internals.contains(&then) {
            internals.push(then.clone());
        }
        conditions.insert(then.clone(), ConditionKind::Internal);
        for g in &given {
            conditions.entry(g.clone()).or_insert(ConditionKind::Internal);
        }
        let (step_type, data_spec) = if rng.gen_bool(0.2) {
            (StepType::DataCollection, Some(random_spec(rng, format!("f{k}"))))
        } else {
            (StepType::Execution, None)
        };
        let responsible = if rng.gen_bool(0.2) {
            Responsible::Binding(format!("sUAS_{}", rng.gen_range(1..=2)))
        } else {
            Responsible::Role(ACTORS.choose(rng).expect("non-empty").to_string())
        };
        tasks.push(TaskNode {
            task_id: format!("T{k}"),
            origin: TaskOrigin { scenario_id: "RND".into(), step_id: format!("T{k}"), assignment: BTreeMap::new() },
            given: given.into_iter().collect(),
            when: format!("do {k}"),
            then: vec![then],
            step_type,
            responsible,
            priority: Priority::new(rng.gen_range(1..=5)).expect("in range"),
            phase: phases.choose(rng).expect("non-empty").clone(),
            duration_limit: rng.gen_bool(0.3).then(|| rng.gen_range(1..=30)),
            data_spec,
        });
    }
    // Later producers of an already-consumed condition could close a cycle
    // only if they consume downstream of it; drop such extra productions.
    let mut graph = TaskGraph {
        mission_template_id: "RND".into(),
        name: "random graph".into(),
        actors: ACTORS.iter().chain(&["pilot_1", "pilot_2"]).map(|s| s.to_string()).collect(),
        phases,
        tasks,
        conditions: conditions.into_iter().map(|(id, kind)| ConditionDecl { id, kind }).collect(),
    };
    while let Some(cycle) = graph.cycles().into_iter().next() {
        let last = cycle.iter().max_by_key(|id| id[1..].parse::<usize>().unwrap_or(0)).expect("non-empty").clone();
        let task = graph.tasks.iter_mut().find(|t| t.task_id == last).expect("cycle member exists");
        let fresh = format!("c{}", &last[1..]);
        task.then = vec![fresh.clone()];
        if graph.condition(&fresh).is_none() {
            graph.conditions.push(ConditionDecl { id: fresh, kind: ConditionKind::Internal });
            graph.conditions.sort();
        }
    }
    // Drop declarations nobody uses any more.
    let used: BTreeSet<String> = graph.tasks.iter().flat_map(|t| t.given.iter().chain(&t.then).cloned()).collect();
    graph.conditions.retain(|c| used.contains(&c.id));
    debug_assert!(graph.invariant_violations().is_empty(), "{:?}", graph.invariant_violations());
    graph
}

/// Actor bindings for every binding key of `graph`.
pub fn default_bindings(graph: &TaskGraph) -> BTreeMap<String, String> {
    graph.bindings_required().into_iter().map(|k| (k.clone(), format!("pilot_{}", &k[k.len() - 1..]))).collect()
}

/// Every action that is legal in `state` right now (plus time advances),
/// ignoring duplicates. Retries are capped at one copy per task.
pub fn legal_actions(state: &MissionState) -> Vec<Action> {
    let mut out = Vec::new();
    if state.is_closed() {
        return out;
    }
    let graph = state.graph();
    for c in graph.conditions.iter().filter(|c| c.kind == ConditionKind::External) {
        if !state.satisfied().contains(&c.id) {
            out.push(Action::Confirm { actor: MISSION_COMMANDER.into(), condition: c.id.clone() });
        }
    }
    for (task, status) in state.statuses() {
        let actor = state.resolve(&task.responsible);
        let id = task.task_id.clone();
        match status {
            TaskStatus::Available => {
                out.push(Action::Start { actor, task: id.clone() });
                out.push(Action::Skip { actor: MISSION_COMMANDER.into(), task: id, note: Some("not needed".into()) });
            }
            TaskStatus::Pending => {
                out.push(Action::Skip { actor: MISSION_COMMANDER.into(), task: id, note: None });
            }
            TaskStatus::InProgress => {
                let has_data = state.data().iter().any(|d| d.task_id == id);
                if let (StepType::DataCollection, Some(spec)) = (task.step_type, &task.data_spec) {
                    out.push(Action::Record { actor: actor.clone(), task: id.clone(), value: valid_value(spec) });
                }
                if task.step_type == StepType::Execution || has_data {
                    out.push(Action::Complete { actor: actor.clone(), task: id.clone() });
                }
                out.push(Action::Fail { actor, task: id, note: "did not work".into() });
            }
            TaskStatus::Failed | TaskStatus::Skipped => {
                if !id.contains('~') && state.task(&format!("{id}~2")).is_none() {
                    out.push(Action::Retry { actor: MISSION_COMMANDER.into(), task: id });
                }
            }
            TaskStatus::Completed => {}
        }
    }
    out.push(Action::Advance { seconds: 5 });
    out
}

/// Picks a random legal action, favouring progress. Returns `None` once the
/// mission is closed.
pub fn random_action<R: Rng>(rng: &mut R, state: &MissionState) -> Option<Action> {
    let actions = legal_actions(state);
    if actions.is_empty() {
        return None;
    }
    let roll: f64 = rng.gen();
    if state.is_closeable() && roll < 0.3 {
        return Some(Action::Close { actor: MISSION_COMMANDER.into() });
    }
    if roll < 0.03 {
        let task = state.tasks().choose(rng).map(|t| t.task_id.clone());
        return Some(Action::Issue {
            actor: ACTORS.choose(rng).expect("non-empty").to_string(),
            severity: *[IssueSeverity::Info, IssueSeverity::Minor, IssueSeverity::Major, IssueSeverity::Blocker]
                .choose(rng)
                .expect("non-empty"),
            task,
            text: "something odd".into(),
        });
    }
    if roll < 0.05 {
        let task = state.tasks().choose(rng).map(|t| t.task_id.clone())?;
        return Some(Action::Reprioritize {
            actor: MISSION_COMMANDER.into(),
            task,
            priority: Priority::new(rng.gen_range(1..=5)).expect("in range"),
        });
    }
    // Weighted pick by kind among what is legal right now.
    let weight = |a: &Action| match a {
        Action::Start { .. } | Action::Complete { .. } | Action::Record { .. } => 20,
        Action::Confirm { .. } => 8,
        Action::Advance { .. } => 4,
        Action::Fail { .. } | Action::Retry { .. } => 2,
        _ => 1,
    };
    let total: u32 = actions.iter().map(weight).sum();
    let mut pick = rng.gen_range(0..total);
    for a in &actions {
        let w = weight(a);
        if pick < w {
            return Some(a.clone());
        }
        pick -= w;
    }
    actions.last().cloned()
}

/// An out-of-range value for a ranged spec, if it has one.
pub fn invalid_value(spec: &DataSpec) -> Option<serde_json::Value> {
    match (&spec.datatype, &spec.validation) {
        (DataType::Integer, Some(Validation::Range { max, .. })) => Some(json!(*max as i64 + 1)),
        (DataType::Number, Some(Validation::Range { max, .. })) => Some(json!(max + 1.0)),
        _ => None,
    }
}

/// Runs `steps` random legal actions on a fresh mission of `graph`, calling
/// `observe` after each applied action.
pub fn random_run<R, F>(rng: &mut R, graph: &TaskGraph, steps: usize, mut observe: F) -> MissionState
where
    R: Rng,
    F: FnMut(&MissionState, &Action),
{
    let bindings = default_bindings(graph);
    let mut state = MissionState::start_mission("random", graph.clone(), bindings, 0).expect("bindings complete");
    let mut now: Timestamp = 0;
    for _ in 0..steps {
        let Some(action) = random_action(rng, &state) else { break };
        crate::sim::apply_action(&mut state, &action, &mut now)
            .unwrap_or_else(|e| panic!("legal action {action} rejected: {e}"));
        observe(&state, &action);
    }
    state
}
