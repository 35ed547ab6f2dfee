use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use fits_core::compiler::CompileOptions;
use fits_core::engine::{
    parse_ndjson, replay, to_ndjson, EngineError, EventKind, IssueInput, IssueSeverity, MissionState,
    TaskStatus,
};
use fits_core::library::Library;
use fits_core::model::{
    ConditionDecl, ConditionKind, DataSpec, DataType, Priority, Responsible, StepType, TaskGraph, TaskNode, TaskOrigin,
    Validation, MISSION_COMMANDER,
};
use fits_core::sim::{happy_script, run_script};
use fits_core::testkit;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

mod support;
use support::*;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn tc01() -> TaskGraph {
    let lib = Library::load(&[corpus("tc01.fits")]).unwrap();
    lib.compile("TC01", &CompileOptions::default()).unwrap().unwrap().graph
}

fn tc01_bindings() -> BTreeMap<String, String> {
    (1..=3).map(|i| (format!("sUAS_{i}"), format!("pilot_{i}"))).collect()
}

fn node(id: &str, given: &[&str], then: &[&str], role: &str) -> TaskNode {
    TaskNode {
        task_id: id.into(),
        origin: TaskOrigin { scenario_id: "T".into(), step_id: id.into(), assignment: BTreeMap::new() },
        given: given.iter().map(|s| s.to_string()).collect(),
        when: format!("do {id}"),
        then: then.iter().map(|s| s.to_string()).collect(),
        step_type: StepType::Execution,
        responsible: Responsible::Role(role.into()),
        priority: Priority::default(),
        phase: String::new(),
        duration_limit: None,
        data_spec: None,
    }
}

fn graph(tasks: Vec<TaskNode>, external: &[&str]) -> TaskGraph {
    let mut ids: BTreeSet<String> = tasks.iter().flat_map(|t| t.given.iter().chain(&t.then).cloned()).collect();
    ids.extend(external.iter().map(|s| s.to_string()));
    TaskGraph {
        mission_template_id: "T".into(),
        name: "t".into(),
        actors: vec!["pilot".into(), "observer".into()],
        phases: vec![],
        tasks,
        conditions: ids
            .into_iter()
            .map(|id| {
                let kind = if external.contains(&id.as_str()) { ConditionKind::External } else { ConditionKind::Internal };
                ConditionDecl { id, kind }
            })
            .collect(),
    }
}

// ---- start / views ---------------------------------------------------------

#[test]
fn tc01_mission_starts_all_pending() {
    let s = MissionState::start_mission("m", tc01(), tc01_bindings(), 0).unwrap();
    assert_eq!(s.tasks().len(), 12);
    assert_eq!(s.count(TaskStatus::Pending), 12);
}

#[test]
fn task_without_preconditions_is_immediately_available() {
    let s = MissionState::start_mission("m", graph(vec![node("A", &[], &["a"], "pilot")], &[]), BTreeMap::new(), 0).unwrap();
    assert_eq!(s.status("A"), Some(TaskStatus::Available));
}

#[test]
fn missing_binding_is_named() {
    let g = tc01();
    let mut bindings = tc01_bindings();
    bindings.remove("sUAS_3");
    let expected: Vec<String> =
        g.bindings_required().difference(&bindings.keys().cloned().collect()).cloned().collect();
    let err = MissionState::start_mission("m", g, bindings, 0).unwrap_err();
    assert_eq!(err, EngineError::MissingBinding(expected.clone()));
    assert_eq!(expected, ["sUAS_3"]);
    assert!(err.to_string().contains("sUAS_3"));
}

#[test]
fn commander_view_without_commander_tasks_is_empty() {
    let s = MissionState::start_mission("m", tc01(), tc01_bindings(), 0).unwrap();
    assert!(s.view_tasks(MISSION_COMMANDER).unwrap().is_empty());
    assert!(matches!(s.view_tasks("nobody"), Err(EngineError::UnknownRole(_))));
}

#[test]
fn confirming_availability_unlocks_placement() {
    let mut s = MissionState::start_mission("m", tc01(), tc01_bindings(), 0).unwrap();
    s.confirm_condition("suas1 is available at test site", "pilot_1", 1_000).unwrap();
    assert_eq!(s.status("11.1"), Some(TaskStatus::Available));
    let view: Vec<_> = s.view_tasks("pilot_1").unwrap().into_iter().map(|v| v.task_id).collect();
    assert_eq!(view, ["11.1"]);

    // Only x = 1 is reachable.
    for (t, status) in s.statuses() {
        let x = &t.origin.assignment["x"];
        let reachable = x == "1" && t.given.iter().all(|c| s.satisfied().contains(c));
        assert_eq!(status == TaskStatus::Available, reachable, "{}", t.task_id);
    }

    let before: Vec<_> = s.statuses().map(|(t, st)| (t.task_id.clone(), st)).collect();
    let satisfied = s.satisfied().clone();
    let events = s.confirm_condition("sUAS1 is available at test site.", "pilot_1", 2_000).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].kind, EventKind::Warning);
    assert_eq!(s.satisfied(), &satisfied);
    assert_eq!(s.statuses().map(|(t, st)| (t.task_id.clone(), st)).collect::<Vec<_>>(), before);
}

#[test]
fn completing_placement_satisfies_its_then_and_roles_are_enforced() {
    let mut s = MissionState::start_mission("m", tc01(), tc01_bindings(), 0).unwrap();
    s.confirm_condition("suas1 is available at test site", "pilot_1", 0).unwrap();
    let err = s.start_task("11.1", "pilot_2", 0).unwrap_err();
    assert!(err.to_string().contains("not responsible"), "{err}");
    s.start_task("11.1", "pilot_1", 0).unwrap();
    s.complete_task("11.1", "pilot_1", 5_000).unwrap();
    assert!(s.satisfied().contains("suas1 is placed in its launch position"));
    // Illegal transition: completing twice.
    assert!(matches!(s.complete_task("11.1", "pilot_1", 6_000), Err(EngineError::IllegalTransition { .. })));
}

#[test]
fn skip_requires_commander_and_fail_requires_note() {
    let g = graph(vec![node("A", &[], &["a"], "pilot"), node("B", &["a"], &["b"], "pilot")], &[]);
    let mut s = MissionState::start_mission("m", g, BTreeMap::new(), 0).unwrap();
    assert!(matches!(s.skip_task("B", "pilot", 0, None), Err(EngineError::CommanderOnly(_))));
    s.start_task("A", "pilot", 0).unwrap();
    assert!(matches!(s.fail_task("A", "pilot", 0, "  "), Err(EngineError::NoteRequired(_))));
    s.fail_task("A", "pilot", 0, "motor fault").unwrap();
    s.skip_task("B", MISSION_COMMANDER, 0, Some("depends on A")).unwrap();
    assert!(s.is_closeable());
    s.retry_task("A", MISSION_COMMANDER, 0).unwrap();
    assert_eq!(s.status("A~2"), Some(TaskStatus::Available));
    assert!(!s.is_closeable());
}

// ---- data and issues --------------------------------------------------------

fn td_graph(spec: DataSpec) -> TaskGraph {
    let mut t = node("D", &[], &["d"], "pilot");
    t.step_type = StepType::DataCollection;
    t.data_spec = Some(spec);
    graph(vec![t], &[])
}

fn record(spec: DataSpec, value: serde_json::Value) -> Result<bool, EngineError> {
    let mut s = MissionState::start_mission("m", td_graph(spec), BTreeMap::new(), 0).unwrap();
    s.start_task("D", "pilot", 0).unwrap();
    s.record_data("D", value, "pilot", 0)?;
    Ok(s.data()[0].valid)
}

#[test]
fn satellite_fix_records() {
    let spec = DataSpec {
        field_name: "satellite_fixes".into(),
        datatype: DataType::Integer,
        validation: Some(Validation::Range { min: 6.0, max: 30.0 }),
        telemetry_key: None,
    };
    assert_eq!(record(spec.clone(), json!(12)), Ok(true));
    assert_eq!(record(spec.clone(), json!(0)), Ok(false));
    assert!(matches!(record(spec, json!("twelve")), Err(EngineError::TypeMismatch { .. })));
}

#[test]
fn enum_membership() {
    let values = ["GUIDED", "LOITER", "RTL"];
    let spec = DataSpec {
        field_name: "mode".into(),
        datatype: DataType::Enum(values.iter().map(|s| s.to_string()).collect()),
        validation: None,
        telemetry_key: None,
    };
    for candidate in ["RTL", "GUIDED", "LAND", "rtl"] {
        assert_eq!(record(spec.clone(), json!(candidate)), Ok(values.contains(&candidate)), "{candidate}");
    }
}

#[test]
fn data_task_needs_a_record_before_completion() {
    let spec = DataSpec { field_name: "f".into(), datatype: DataType::Boolean, validation: None, telemetry_key: None };
    let mut s = MissionState::start_mission("m", td_graph(spec), BTreeMap::new(), 0).unwrap();
    s.start_task("D", "pilot", 0).unwrap();
    assert!(matches!(s.complete_task("D", "pilot", 0), Err(EngineError::DataRequired(_))));
    s.record_data("D", json!(true), "pilot", 0).unwrap();
    s.complete_task("D", "pilot", 0).unwrap();
}

#[test]
fn issues_link_to_tasks() {
    let mut s = MissionState::start_mission("m", tc01(), tc01_bindings(), 0).unwrap();
    let issue = |task: Option<&str>, severity, text: &str| IssueInput {
        task_id: task.map(str::to_string),
        reporter: "pilot_2".into(),
        severity,
        text: text.into(),
    };
    s.report_issue(issue(Some("12.2.1"), IssueSeverity::Major, "arming failed, retried"), 10).unwrap();
    s.report_issue(issue(None, IssueSeverity::Info, "wind picking up"), 20).unwrap();
    assert_eq!(s.issues()[0].task_id.as_deref(), Some("12.2.1"));
    assert_eq!(s.issues()[0].issue_id, "I1");
    assert_eq!(s.issues()[1].task_id, None);
    let bogus = "9z.9";
    assert!(s.task(bogus).is_none());
    assert!(matches!(s.report_issue(issue(Some(bogus), IssueSeverity::Minor, "x"), 30), Err(EngineError::UnknownTask(_))));
    assert!(matches!(s.report_issue(issue(None, IssueSeverity::Minor, " "), 30), Err(EngineError::EmptyIssue)));
}

// ---- alarms ----------------------------------------------------------------

fn timed(limit: u64) -> TaskGraph {
    let mut t = node("A", &[], &["a"], "pilot");
    t.duration_limit = Some(limit);
    graph(vec![t], &[])
}

#[test]
fn duration_alarm_examples() {
    let mut s = MissionState::start_mission("m", timed(120), BTreeMap::new(), 0).unwrap();
    assert!(s.tick(10).unwrap().is_empty(), "no in-progress tasks, no events");
    let mut s = MissionState::start_mission("m", timed(120), BTreeMap::new(), 0).unwrap();
    s.start_task("A", "pilot", 0).unwrap();
    let fired = s.tick(130_000).unwrap();
    assert_eq!(fired.len(), 1);
    assert_eq!(fired[0].kind, EventKind::DurationExceeded);
    assert!(s.tick(140_000).unwrap().is_empty());
}

#[test]
fn staggered_deadlines_fire_once_each() {
    let tasks: Vec<TaskNode> = [30u64, 60, 90]
        .iter()
        .enumerate()
        .map(|(i, limit)| {
            let mut t = node(&format!("T{i}"), &[], &[&format!("t{i}")], "pilot");
            t.duration_limit = Some(*limit);
            t
        })
        .collect();
    let g = graph(tasks, &[]);
    let mut s = MissionState::start_mission("m", g.clone(), BTreeMap::new(), 0).unwrap();
    for (i, t) in g.tasks.iter().enumerate() {
        s.start_task(&t.task_id, "pilot", i as u64 * 1_000).unwrap();
    }
    let now = 200_000;
    // Independent deadline scan.
    let due: Vec<String> = g
        .tasks
        .iter()
        .enumerate()
        .filter(|(i, t)| *i as u64 * 1_000 + t.duration_limit.unwrap() * 1_000 <= now)
        .map(|(_, t)| t.task_id.clone())
        .collect();
    let fired: Vec<String> = s.tick(now).unwrap().into_iter().map(|e| e.task_id.unwrap()).collect();
    assert_eq!(fired, due);
    assert_eq!(fired.len(), 3);
    assert!(s.tick(now + 1).unwrap().is_empty());
}

proptest! {
    /// A task with limit L started at t alarms exactly once, at the first
    /// tick >= t + L.
    #[test]
    fn alarm_fires_at_first_due_tick(limit in 1u64..300, start in 0u64..100_000, gaps in proptest::collection::vec(1u64..90_000, 1..20)) {
        let mut s = MissionState::start_mission("m", timed(limit), BTreeMap::new(), 0).unwrap();
        s.start_task("A", "pilot", start).unwrap();
        let deadline = start + limit * 1000;
        let mut now = start;
        let mut fired_at = Vec::new();
        let mut ticks = Vec::new();
        for g in gaps {
            now += g;
            ticks.push(now);
            for e in s.tick(now).unwrap() {
                fired_at.push(e.timestamp);
            }
        }
        let first_due = ticks.iter().copied().find(|t| *t >= deadline);
        prop_assert_eq!(fired_at, first_due.into_iter().collect::<Vec<_>>());
    }
}

// ---- replay ----------------------------------------------------------------

#[test]
fn empty_log_equals_fresh_start() {
    let g = Arc::new(tc01());
    let fresh = MissionState::start_shared("m", g.clone(), tc01_bindings(), 0).unwrap();
    let replayed = replay("m", &[], g, &tc01_bindings()).unwrap();
    assert_eq!(replayed.digest(), fresh.digest());
}

#[test]
fn tc01_happy_path_replays_to_all_completed() {
    let g = tc01();
    let script = happy_script(&g, &tc01_bindings()).unwrap();
    let state = run_script("m", Arc::new(g.clone()), &BTreeMap::new(), &script).map_err(|(_, e)| e).unwrap();
    assert_eq!(state.count(TaskStatus::Completed), 12);
    assert!(state.is_closed());
    let log = to_ndjson(state.events());
    let replayed = replay("m", &parse_ndjson(&log).unwrap(), Arc::new(g), &BTreeMap::new()).unwrap();
    assert_eq!(replayed.count(TaskStatus::Completed), 12);
    assert!(replayed.is_closeable());
    assert_eq!(replayed.digest(), state.digest());
}

#[test]
fn seq_gap_is_reported() {
    let g = tc01();
    let mut s = MissionState::start_mission("m", g.clone(), tc01_bindings(), 0).unwrap();
    s.confirm_condition("suas1 is available at test site", "pilot_1", 1).unwrap();
    s.confirm_condition("suas2 is available at test site", "pilot_2", 2).unwrap();
    s.confirm_condition("suas3 is available at test site", "pilot_3", 3).unwrap();
    let mut events = s.events().to_vec();
    events.remove(2);
    let err = replay("m", &events, Arc::new(g), &BTreeMap::new()).unwrap_err();
    assert_eq!(err.to_string(), "missing seq 3");
}

#[test]
fn tampered_log_is_corrupt() {
    let g = tc01();
    let mut s = MissionState::start_mission("m", g.clone(), tc01_bindings(), 0).unwrap();
    s.confirm_condition("suas1 is available at test site", "pilot_1", 1).unwrap();
    s.start_task("11.1", "pilot_1", 2).unwrap();
    let mut events = s.events().to_vec();
    events[2].actor = "pilot_2".into();
    let err = replay("m", &events, Arc::new(g.clone()), &BTreeMap::new()).unwrap_err();
    assert!(matches!(err, EngineError::CorruptLog { seq: 3, .. }), "{err}");
    assert!(parse_ndjson("{not json}\n").is_err());
}

#[test]
fn clock_never_goes_backwards() {
    let mut s = MissionState::start_mission("m", timed(10), BTreeMap::new(), 5_000).unwrap();
    assert!(matches!(s.start_task("A", "pilot", 1_000), Err(EngineError::ClockRegression { .. })));
    assert!(matches!(s.tick(10), Err(EngineError::ClockRegression { .. })));
}

// ---- randomized legal schedules ---------------------------------------------

#[test]
fn availability_matches_brute_force_on_random_schedules() {
    let started = Instant::now();
    let mut divergences = 0usize;
    let mut checks = 0usize;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=50);
        let g = testkit::random_graph(&mut rng, n);
        let steps = rng.gen_range(10..=120);
        let final_state = testkit::random_run(&mut rng, &g, steps, |state, _| {
            for role in state.actors() {
                let engine: Vec<(String, TaskStatus)> =
                    state.view_tasks(role).unwrap().into_iter().map(|v| (v.task_id, v.status)).collect();
                let oracle = brute_force_view(&g, state.events(), role);
                checks += 1;
                if engine != oracle {
                    divergences += 1;
                }
            }
        });
        assert_eq!(final_state.satisfied(), &satisfied_fold(&final_state), "seed {seed}");
        let replayed = replay("random", final_state.events(), Arc::new(g.clone()), &BTreeMap::new()).unwrap();
        assert_eq!(replayed.digest(), final_state.digest(), "seed {seed}");
        let total: usize = TaskStatus::ALL.iter().map(|s| final_state.count(*s)).sum();
        assert_eq!(total, final_state.tasks().len());
    }
    assert_eq!(divergences, 0, "{divergences} divergences in {checks} checks");
    assert!(checks > 10_000);
    assert!(started.elapsed().as_secs() < 60, "took {:?}", started.elapsed());
}

#[test]
fn ndjson_round_trip_is_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = testkit::random_graph(&mut rng, 20);
    let s = testkit::random_run(&mut rng, &g, 80, |_, _| {});
    let text = to_ndjson(s.events());
    assert_eq!(to_ndjson(&parse_ndjson(&text).unwrap()), text);
}
