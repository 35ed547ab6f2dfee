use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

use fits_core::compiler::{self, inline_subprocesses, CompileOptions, LintCode, MAX_NESTING};
use fits_core::dsl::{import_csv_template, parse_scenario};
use fits_core::library::Library;
use fits_core::model::{
    BindingExpr, ConditionText, Domain, RoleExpr, ScenarioTemplate, StepTemplate, SubProcessDef, SubprocessCall, Suite,
    SuiteEntry, VariableKind,
};
use fits_core::package::MissionPackage;
use fits_core::testkit;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod support;
use support::*;

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(corpus(name)).unwrap()
}

/// Flattened step count, computed by recursion over the definitions.
fn recursive_count(steps: &[StepTemplate], defs: &[SubProcessDef]) -> usize {
    steps
        .iter()
        .map(|s| match &s.subprocess {
            Some(call) => recursive_count(&defs.iter().find(|d| d.name == call.name).unwrap().steps, defs),
            None => 1,
        })
        .sum()
}

// ---- corpus --------------------------------------------------------------

#[test]
fn corpus_shapes_lint_clean_and_compile_fast() {
    let lib = Library::load(&[corpus("field_tests.fits")]).unwrap();
    for (id, steps) in [("TC02", 21), ("TC03", 36), ("TC04", 20)] {
        let t = &lib.scenarios[id];
        assert_eq!(t.steps.len(), steps, "{id} authored steps");
        let report = lib.lint(id, &CompileOptions::default()).unwrap();
        assert!(report.passed, "{id}: {:?}", report.findings);
        assert_eq!(report.errors().count(), 0);
        let started = Instant::now();
        let c = lib.compile(id, &CompileOptions::default()).unwrap().unwrap();
        assert!(started.elapsed().as_secs_f64() < 1.0, "{id} compiled in {:?}", started.elapsed());
        assert!(c.graph.invariant_violations().is_empty());
    }
}

#[test]
fn corpus_expansion_matches_enumeration_oracle() {
    let lib = Library::load(&[corpus("field_tests.fits"), corpus("tc01.fits")]).unwrap();
    for id in ["TC01", "TC02", "TC03", "TC04"] {
        let inlined = inline_subprocesses(&lib.scenarios[id], &lib.subprocesses).unwrap();
        let graph = lib.compile(id, &CompileOptions::default()).unwrap().unwrap().graph;
        assert_eq!(graph.tasks.len(), enumeration_oracle(&inlined), "{id}");
    }
}

#[test]
fn tc01_lints_clean_and_expands_to_twelve() {
    let lib = Library::load(&[corpus("tc01.fits")]).unwrap();
    let report = lib.lint("TC01", &CompileOptions::default()).unwrap();
    assert!(report.passed);
    assert_eq!(report.errors().count(), 0);
    let c = lib.compile("TC01", &CompileOptions::default()).unwrap().unwrap();
    let ids: BTreeSet<&str> = c.graph.tasks.iter().map(|t| t.task_id.as_str()).collect();
    let mut expected = BTreeSet::new();
    for x in 1..=3 {
        expected.insert(format!("1{x}.1"));
        for k in 1..=3 {
            expected.insert(format!("1{x}.2.{k}"));
        }
    }
    assert_eq!(ids, expected.iter().map(String::as_str).collect());
    assert_eq!(c.graph.bindings_required(), ["sUAS_1", "sUAS_2", "sUAS_3"].iter().map(|s| s.to_string()).collect());
}

#[test]
fn tc01_without_external_marks_fails_strict_and_passes_auto_external() {
    let source = read("tc01_flat.fits").replace("given external:", "given:");
    let t = parse_scenario(&source).unwrap().value;
    let strict = compiler::lint(&t, &[]);
    assert!(!strict.passed);
    assert_eq!(strict.with_code(LintCode::UnsatisfiablePrecondition).count(), 2);
    let auto = compiler::lint_with(&t, &[], &CompileOptions { auto_external: true });
    assert!(auto.passed, "{:?}", auto.findings);
    assert!(auto.with_code(LintCode::AutoExternal).count() > 0);
}

#[test]
fn csv_and_dsl_import_to_equal_templates() {
    let from_csv = import_csv_template(&read("tc01.csv"), "tc01.csv", "tc01").unwrap().value;
    let from_dsl = parse_scenario(&read("tc01.fits")).unwrap().value;
    assert_eq!(from_csv, from_dsl);
}

#[test]
fn inlined_tc01_is_isomorphic_to_flat_twin() {
    let lib = Library::load(&[corpus("tc01.fits")]).unwrap();
    let inlined = lib.compile("TC01", &CompileOptions::default()).unwrap().unwrap().graph;
    let flat_lib = Library::load(&[corpus("tc01_flat.fits")]).unwrap();
    let flat = flat_lib.compile("TC01", &CompileOptions::default()).unwrap().unwrap().graph;
    assert_eq!(inlined.tasks.len(), flat.tasks.len());
    assert!(isomorphic(&inlined, &flat));

    // Sanity: the oracle notices a changed edge.
    let mut broken = flat.clone();
    broken.tasks[0].then.clear();
    assert!(!isomorphic(&inlined, &broken));
}

// ---- lint ----------------------------------------------------------------

fn step(id: &str, given: &[&str], then: &[&str]) -> StepTemplate {
    let mut s = StepTemplate::new(id, format!("do {id}"));
    s.given = given.iter().map(|g| ConditionText::internal(*g)).collect();
    s.then = then.iter().map(|t| ConditionText::internal(*t)).collect();
    s.responsible = Some(RoleExpr::Role("pilot".into()));
    s
}

fn scenario(steps: Vec<StepTemplate>) -> ScenarioTemplate {
    let mut t = ScenarioTemplate::new("T", "test");
    t.primary_actors = vec!["pilot".into()];
    t.steps = steps;
    t
}

#[test]
fn self_cycle_is_reported_with_its_task() {
    let t = scenario(vec![step("A", &["a is done"], &["a is done"])]);
    let report = compiler::lint(&t, &[]);
    assert!(!report.passed);
    let cycles: Vec<_> = report.with_code(LintCode::DependencyCycle).collect();
    assert_eq!(cycles.len(), 1);
    assert!(cycles[0].message.ends_with("[A]"), "{}", cycles[0].message);
}

#[test]
fn two_step_cycle_lists_both() {
    let t = scenario(vec![step("A", &["b done"], &["a done"]), step("B", &["a done"], &["b done"])]);
    let report = compiler::lint(&t, &[]);
    let msgs: Vec<_> = report.with_code(LintCode::DependencyCycle).map(|f| f.message.clone()).collect();
    assert_eq!(msgs, vec!["dependency cycle [A, B]".to_string()]);
}

/// Consumed internal givens that no step produces, per (step, text).
fn set_difference_oracle(t: &ScenarioTemplate) -> BTreeSet<(String, String)> {
    let produced: BTreeSet<&str> = t.steps.iter().flat_map(|s| s.then.iter().map(|c| c.raw.as_str())).collect();
    t.steps
        .iter()
        .flat_map(|s| {
            s.given
                .iter()
                .filter(|c| c.kind == fits_core::model::ConditionKind::Internal && !produced.contains(c.raw.as_str()))
                .map(|c| (s.step_id.clone(), c.raw.clone()))
        })
        .collect()
}

#[test]
fn deleting_one_producer_yields_exactly_one_unsatisfiable_error() {
    let mut checked = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = testkit::random_template(&mut rng, 30);
        assert!(compiler::lint(&t, &[]).passed);
        // A producer whose condition exactly one step consumes.
        let victim = t.steps.iter().position(|p| {
            let text = &p.then[0].raw;
            t.steps.iter().filter(|s| s.given.iter().any(|g| &g.raw == text)).count() == 1
        });
        let Some(victim) = victim else { continue };
        t.steps[victim].then.clear();
        let oracle = set_difference_oracle(&t);
        let report = compiler::lint(&t, &[]);
        let found: Vec<_> = report.with_code(LintCode::UnsatisfiablePrecondition).collect();
        assert_eq!(oracle.len(), 1, "seed {seed}");
        assert_eq!(found.len(), oracle.len(), "seed {seed}: {found:?}");
        assert_eq!(found[0].location, format!("step {}", oracle.first().unwrap().0));
        assert_eq!(report.errors().count(), 1);
        checked += 1;
        if checked == 25 {
            break;
        }
    }
    assert!(checked >= 10, "too few usable seeds: {checked}");
}

#[test]
fn unknown_role_and_missing_data_spec() {
    let mut s = step("A", &[], &["a done"]);
    s.responsible = Some(RoleExpr::Role("ghost".into()));
    let mut td = step("B", &["a done"], &[]);
    td.step_type = fits_core::model::StepType::DataCollection;
    let report = compiler::lint(&scenario(vec![s.clone(), step("B", &["a done"], &[])]), &[]);
    assert_eq!(report.with_code(LintCode::UnknownRole).count(), 1);
    let report = compiler::lint(&scenario(vec![step("A", &[], &["a done"]), td]), &[]);
    assert_eq!(report.with_code(LintCode::MissingDataSpec).count(), 1);
}

// ---- inlining ------------------------------------------------------------

#[test]
fn tc01_inlining_grows_by_two_steps() {
    let lib = Library::load(&[corpus("tc01.fits")]).unwrap();
    let t = &lib.scenarios["TC01"];
    let inlined = inline_subprocesses(t, &lib.subprocesses).unwrap();
    let ids: Vec<&str> = inlined.steps.iter().map(|s| s.step_id.as_str()).collect();
    assert_eq!(ids, ["1x.1", "1x.2.1", "1x.2.2", "1x.2.3"]);
    assert_eq!(inlined.steps.len(), t.steps.len() + 2);
    // Caller givens go first, caller thens last.
    assert_eq!(inlined.steps[1].given[0].raw, "sUAS<x> is disabled.");
    assert_eq!(inlined.steps[3].then.last().unwrap().raw, "sUAS<x> is activated and armed.");
}

#[test]
fn inlining_without_calls_is_identity() {
    let t = parse_scenario(&read("tc01_flat.fits")).unwrap().value;
    assert_eq!(inline_subprocesses(&t, &[]).unwrap(), t);
}

fn call(name: &str) -> SubprocessCall {
    SubprocessCall { name: name.into(), params: BTreeMap::from([("who".to_string(), BindingExpr::Value("pilot".into()))]) }
}

fn def(name: &str, steps: Vec<StepTemplate>) -> SubProcessDef {
    SubProcessDef { name: name.into(), params: vec!["who".into()], steps }
}

fn param_step(id: &str, then: &str) -> StepTemplate {
    let mut s = StepTemplate::new(id, format!("<who> does {then}"));
    s.given = Vec::new();
    s.then = vec![ConditionText::internal(then)];
    s.responsible = Some(RoleExpr::Param("who".into()));
    s
}

#[test]
fn nested_inlining_matches_recursive_count() {
    let mut b1 = param_step("1", "b1");
    b1.subprocess = Some(call("C"));
    let c = def("C", vec![param_step("1", "c1"), param_step("2", "c2")]);
    let b = def("B", vec![b1, param_step("2", "b2")]);
    let mut a1 = param_step("1", "a1");
    a1.subprocess = Some(call("B"));
    let a = def("A", vec![param_step("0", "a0"), a1]);
    let mut top = step("S", &[], &["s done"]);
    top.subprocess = Some(call("A"));
    let t = scenario(vec![step("R", &[], &["r done"]), top]);
    let defs = vec![a, b, c];

    let inlined = inline_subprocesses(&t, &defs).unwrap();
    assert_eq!(inlined.steps.len(), recursive_count(&t.steps, &defs));
    assert_eq!(inlined.steps.len(), 5);
    assert!(inlined.steps.iter().all(|s| s.subprocess.is_none()));
    assert!(inlined.steps.iter().any(|s| s.step_id == "S.2.1.1"));
    assert!(inlined.steps.iter().all(|s| s.responsible == Some(RoleExpr::Role("pilot".into()))));
}

#[test]
fn recursion_hits_nesting_limit() {
    let mut s = param_step("1", "loop");
    s.subprocess = Some(call("Loop"));
    let defs = vec![def("Loop", vec![s])];
    let mut top = step("S", &[], &[]);
    top.subprocess = Some(call("Loop"));
    let t = scenario(vec![top]);
    let err = inline_subprocesses(&t, &defs).unwrap_err();
    assert!(matches!(err, fits_core::error::CompileError::NestingTooDeep { limit: MAX_NESTING, .. }));
    let report = compiler::lint(&t, &defs);
    assert_eq!(report.with_code(LintCode::NestingTooDeep).count(), 1);
}

#[test]
fn unknown_subprocess_and_unbound_param() {
    let mut top = step("S", &[], &[]);
    top.subprocess = Some(SubprocessCall { name: "Nope".into(), params: BTreeMap::new() });
    assert_eq!(compiler::lint(&scenario(vec![top.clone()]), &[]).with_code(LintCode::UnknownSubprocess).count(), 1);
    top.subprocess = Some(SubprocessCall { name: "C".into(), params: BTreeMap::new() });
    let defs = vec![def("C", vec![param_step("1", "c1")])];
    assert_eq!(compiler::lint(&scenario(vec![top]), &defs).with_code(LintCode::UnboundParam).count(), 1);
}

// ---- expansion -------------------------------------------------------------

#[test]
fn step_without_variables_yields_one_unchanged_task() {
    let t = scenario(vec![step("A", &[], &["a done"])]);
    let g = compiler::expand(&t).unwrap();
    assert_eq!(g.tasks.len(), 1);
    assert_eq!(g.tasks[0].task_id, "A");
    assert_eq!(g.tasks[0].when, "do A");
}

#[test]
fn empty_domain_is_an_error() {
    let mut t = scenario(vec![step("A.<x>", &[], &["a <x> done"])]);
    t.variables.push(fits_core::model::VariableDecl {
        name: "x".into(),
        domain: Domain::Range { start: 3, end: 1 },
        kind: VariableKind::Index,
    });
    assert!(compiler::expand(&t).is_err());
    assert!(compiler::lint(&t, &[]).with_code(LintCode::EmptyDomain).count() > 0);
}

#[test]
fn duplicate_task_ids_are_rejected() {
    let mut t = scenario(vec![step("A", &[], &["a <x> done"])]);
    t.variables.push(fits_core::model::VariableDecl {
        name: "x".into(),
        domain: Domain::Range { start: 1, end: 2 },
        kind: VariableKind::Index,
    });
    assert!(compiler::lint(&t, &[]).with_code(LintCode::DuplicateTaskId).count() > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expansion_law(seed in any::<u64>(), steps in 1usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = testkit::random_template(&mut rng, steps);
        let c = compiler::compile(&t, &[], &CompileOptions::default()).unwrap();
        prop_assert_eq!(c.graph.tasks.len(), enumeration_oracle(&t));
        prop_assert!(c.graph.invariant_violations().is_empty());
        prop_assert!(c.graph.cycles().is_empty());
    }

    #[test]
    fn package_round_trips(seed in any::<u64>(), steps in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = testkit::random_template(&mut rng, steps);
        let g = compiler::compile(&t, &[], &CompileOptions::default()).unwrap().graph;
        let pkg = MissionPackage::from_graph(&g);
        let back = MissionPackage::from_json(&pkg.to_json()).unwrap();
        prop_assert_eq!(back.graph(), g);
    }
}

// ---- suites ----------------------------------------------------------------

#[test]
fn field_test_suite_compiles_to_three_graphs() {
    let lib = Library::load(&[corpus("field_tests.fits")]).unwrap();
    let suites = lib.resolved_suites();
    assert_eq!(suites.len(), 1);
    let suite = suites[0].as_ref().unwrap().value.clone();
    let graphs = lib.compile_suite(&suite, &CompileOptions::default()).unwrap();
    let ids: Vec<_> = graphs.iter().map(|c| c.graph.mission_template_id.as_str()).collect();
    assert_eq!(ids, ["TC02", "TC03", "TC04"]);
    let sizes: Vec<_> = graphs.iter().map(|c| c.graph.tasks.len()).collect();
    assert_eq!(sizes, [24, 93, 29]);

    let empty = Suite { name: "empty".into(), entries: vec![] };
    assert!(lib.compile_suite(&empty, &CompileOptions::default()).unwrap().is_empty());
}

#[test]
fn suite_with_one_broken_member_names_it_and_emits_nothing() {
    let mut lib = Library::load(&[corpus("field_tests.fits")]).unwrap();
    let broken = lib.scenarios.get_mut("TC03").unwrap();
    broken.steps[3].given.push(ConditionText::internal("a thing nobody provides"));
    let suite = lib.resolved_suites()[0].as_ref().unwrap().value.clone();
    let failure = lib.compile_suite(&suite, &CompileOptions::default()).unwrap_err();
    let failed: Vec<_> = failure.failed.iter().map(|r| r.scenario_id.as_str()).collect();
    let oracle: Vec<_> = suite
        .entries
        .iter()
        .filter(|e| !lib.lint(&e.scenario_id, &CompileOptions::default()).unwrap().passed)
        .map(|e| e.scenario_id.as_str())
        .collect();
    assert_eq!(failed, oracle);
    assert_eq!(failed, ["TC03"]);

    let missing = Suite { name: "m".into(), entries: vec![SuiteEntry { reference: "x.fits".into(), scenario_id: "TC99".into() }] };
    let failure = lib.compile_suite(&missing, &CompileOptions::default()).unwrap_err();
    assert_eq!(failure.failed[0].findings[0].code, LintCode::UnresolvedScenario);
}
