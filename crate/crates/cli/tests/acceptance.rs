//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. `cargo test --test acceptance -p fits-cli`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fits_core::analysis::{build_report, correlate, Verdict, DEFAULT_TOLERANCE_S};
use fits_core::compiler::{self, inline_subprocesses, CompileOptions};
use fits_core::dsl::{import_csv_template, parse_scenario};
use fits_core::engine::{parse_ndjson, replay, to_ndjson, MissionState, TaskStatus};
use fits_core::library::Library;
use fits_core::model::{ConditionDecl, ConditionKind, Priority, Responsible, StepType, TaskGraph, TaskNode, TaskOrigin};
use fits_core::package::MissionPackage;
use fits_core::sim::{happy_script, run_script};
use fits_core::testkit;
use fits_service::app::http_request_for;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[path = "../../core/tests/support/mod.rs"]
mod support;
use support::*;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn tc01_bindings() -> BTreeMap<String, String> {
    (1..=3).map(|i| (format!("sUAS_{i}"), format!("pilot_{i}"))).collect()
}

fn compile_one(file: &str, id: &str) -> TaskGraph {
    let lib = Library::load(&[corpus(file)]).unwrap();
    lib.compile(id, &CompileOptions::default()).unwrap().unwrap().graph
}

// ---- criteria ----------------------------------------------------------------

fn corpus_criterion() -> Check {
    let lib = Library::load(&[corpus("field_tests.fits")]).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for (id, steps) in [("TC02", 21), ("TC03", 36), ("TC04", 20)] {
        let t = lib.scenarios.get(id).ok_or(format!("{id} missing"))?;
        ensure!(t.steps.len() == steps, "{id} has {} steps, expected {steps}", t.steps.len());
        let report = lib.lint(id, &CompileOptions::default()).unwrap();
        ensure!(report.errors().count() == 0, "{id} lint errors: {:?}", report.errors().collect::<Vec<_>>());
        let started = Instant::now();
        let c = lib.compile(id, &CompileOptions::default()).unwrap().map_err(|r| format!("{id}: {r:?}"))?;
        let took = started.elapsed();
        ensure!(took < Duration::from_secs(1), "{id} compiled in {took:?}");
        detail.push(format!("{id} {steps} steps/{} tasks in {:.1} ms", c.graph.tasks.len(), took.as_secs_f64() * 1e3));
    }
    let read = |n: &str| std::fs::read_to_string(corpus(n)).unwrap();
    let from_csv = import_csv_template(&read("tc01.csv"), "tc01.csv", "tc01").map_err(|e| format!("{e:?}"))?.value;
    let from_dsl = parse_scenario(&read("tc01.fits")).map_err(|e| format!("{e:?}"))?.value;
    ensure!(from_csv == from_dsl, "CSV and DSL templates differ");
    Ok(format!("{}; lint clean; TC01 CSV == DSL", detail.join(", ")))
}

fn expansion_criterion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE4A);
    for case in 0..200 {
        let steps = rng.gen_range(1..=12);
        let t = testkit::random_template(&mut rng, steps);
        let c = compiler::compile(&t, &[], &CompileOptions::default()).map_err(|r| format!("case {case}: {r:?}"))?;
        let oracle = enumeration_oracle(&t);
        ensure!(c.graph.tasks.len() == oracle, "case {case}: {} tasks, oracle {oracle}", c.graph.tasks.len());
    }
    let g = compile_one("tc01.fits", "TC01");
    ensure!(g.tasks.len() == 12, "TC01 expands to {} tasks", g.tasks.len());
    let lib = Library::load(&[corpus("tc01.fits")]).unwrap();
    let inlined = inline_subprocesses(&lib.scenarios["TC01"], &lib.subprocesses).map_err(|e| format!("{e:?}"))?;
    ensure!(enumeration_oracle(&inlined) == 12, "oracle disagrees on TC01");
    Ok("200/200 random templates match the enumeration oracle; TC01 -> 12 tasks".into())
}

fn inlining_criterion() -> Check {
    let inlined = compile_one("tc01.fits", "TC01");
    let flat = compile_one("tc01_flat.fits", "TC01");
    ensure!(isomorphic(&inlined, &flat), "graphs are not isomorphic");
    let mut broken = flat.clone();
    broken.tasks[0].then.clear();
    ensure!(!isomorphic(&inlined, &broken), "oracle cannot tell a changed graph apart");
    Ok(format!("{} tasks each, isomorphic dependency graphs", flat.tasks.len()))
}

fn availability_criterion() -> Check {
    let started = Instant::now();
    let (mut checks, mut divergences, mut max_tasks) = (0usize, 0usize, 0usize);
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA000 + seed);
        let n = rng.gen_range(1..=50);
        let g = testkit::random_graph(&mut rng, n);
        ensure!(g.cycles().is_empty() && g.invariant_violations().is_empty(), "seed {seed}: random graph is not lint-clean");
        max_tasks = max_tasks.max(g.tasks.len());
        let steps = rng.gen_range(10..=120);
        testkit::random_run(&mut rng, &g, steps, |state, _| {
            for role in state.actors() {
                let engine: Vec<(String, TaskStatus)> =
                    state.view_tasks(role).unwrap().into_iter().map(|v| (v.task_id, v.status)).collect();
                checks += 1;
                if engine != brute_force_view(&g, state.events(), role) {
                    divergences += 1;
                }
            }
        });
    }
    let took = started.elapsed();
    ensure!(divergences == 0, "{divergences} divergences in {checks} checks");
    ensure!(max_tasks <= 50, "a graph had {max_tasks} tasks");
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("1000 schedules, {checks} view checks, 0 divergences, {:.1} s", took.as_secs_f64()))
}

fn replay_criterion() -> Check {
    // Forward vs replay for every corpus mission and a batch of random runs.
    let lib = Library::load(&[corpus("field_tests.fits"), corpus("tc01.fits")]).unwrap();
    let mut missions = 0;
    for id in ["TC01", "TC02", "TC03", "TC04"] {
        let g = lib.compile(id, &CompileOptions::default()).unwrap().unwrap().graph;
        let bindings = if g.bindings_required().is_empty() { BTreeMap::new() } else { tc01_bindings() };
        let script = happy_script(&g, &bindings).map_err(|e| e.to_string())?;
        let state = run_script(id, Arc::new(g.clone()), &BTreeMap::new(), &script).map_err(|(_, e)| e.to_string())?;
        let log = parse_ndjson(&to_ndjson(state.events())).map_err(|e| e.to_string())?;
        let replayed = replay(id, &log, Arc::new(g), &BTreeMap::new()).map_err(|e| e.to_string())?;
        ensure!(replayed.digest() == state.digest(), "{id}: replay digest differs");
        missions += 1;
    }
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB000 + seed);
        let n = rng.gen_range(1..=40);
        let g = testkit::random_graph(&mut rng, n);
        let steps = rng.gen_range(0..=150);
        let state = testkit::random_run(&mut rng, &g, steps, |_, _| {});
        let replayed = replay("random", state.events(), Arc::new(g), &BTreeMap::new()).map_err(|e| e.to_string())?;
        ensure!(replayed.digest() == state.digest(), "random seed {seed}: replay digest differs");
        missions += 1;
    }
    let restart = service_kill_restart()?;
    Ok(format!("{missions} simulated missions replay to identical digests; {restart}"))
}

fn alarms_criterion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD00);
    for case in 0..500 {
        let limit = rng.gen_range(1u64..300);
        let start = rng.gen_range(0u64..100_000);
        let mut s = MissionState::start_mission("m", timed_graph(limit), BTreeMap::new(), 0).unwrap();
        s.start_task("A", "pilot", start).unwrap();
        let deadline = start + limit * 1000;
        let mut now = start;
        let (mut ticks, mut fired) = (Vec::new(), Vec::new());
        for _ in 0..rng.gen_range(1..25) {
            now += rng.gen_range(1u64..60_000);
            // Occasionally land exactly on the deadline.
            if now < deadline && rng.gen_bool(0.1) {
                now = deadline;
            }
            ticks.push(now);
            fired.extend(s.tick(now).unwrap().into_iter().map(|e| e.timestamp));
        }
        let expected: Vec<u64> = ticks.iter().copied().find(|t| *t >= deadline).into_iter().collect();
        ensure!(fired == expected, "case {case}: limit {limit}s start {start}: fired at {fired:?}, expected {expected:?}");
        ensure!(s.status("A") == Some(TaskStatus::InProgress), "case {case}: alarm changed the task status");
    }
    Ok("500 randomized tick sequences: exactly one alarm at the first tick >= start + limit".into())
}

fn correlation_criterion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let keys = ["altitude", "mode", "battery_voltage", "satellite_fixes"];
    let (mut tasks, mut records, mut samples, mut truth) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..100u64 {
        let key = keys[i as usize % keys.len()];
        let id = format!("R{i}");
        tasks.push(td_task(&id, key));
        let at = 10_000 + i * 20_000;
        let (value, same, other) = if key == "mode" {
            (json!("GUIDED"), text("guided"), text("RTL"))
        } else {
            let v = rng.gen_range(0..10_000) as f64 / 10.0;
            (json!(v), num(v), num(v + 0.5))
        };
        records.push(rec(&id, value, at));
        let inside = at - 2_000 + rng.gen_range(0..=4_000);
        let outside = if rng.gen_bool(0.5) { at + rng.gen_range(2_001..6_000) } else { at - rng.gen_range(2_001..6_000) };
        match i % 3 {
            0 => {
                samples.push(sample(inside, key, same.clone()));
                samples.push(sample(at, key, other.clone()));
                truth.push(Verdict::Agree);
            }
            1 => {
                samples.push(sample(inside, key, other.clone()));
                samples.push(sample(outside, key, same.clone()));
                truth.push(Verdict::Disagree);
            }
            _ => {
                samples.push(sample(outside, key, same.clone()));
                samples.push(sample(at, "unrelated", same.clone()));
                truth.push(Verdict::Unmatched);
            }
        }
    }
    samples.sort_by_key(|s| s.timestamp);
    let got: Vec<Verdict> = correlate(&tasks, &records, &samples, DEFAULT_TOLERANCE_S).iter().map(|v| v.verdict).collect();
    let correct = got.iter().zip(&truth).filter(|(a, b)| a == b).count();
    ensure!(correct == 100, "accuracy {correct}/100");

    // Widening never demotes agree, on random data.
    let mut demotions = 0;
    for _ in 0..300 {
        let key = |rng: &mut ChaCha8Rng| ["a", "b"][rng.gen_range(0..2)];
        let n = rng.gen_range(1..10);
        let tasks: Vec<_> = (0..n).map(|i| td_task(&format!("T{i}"), key(&mut rng))).collect();
        let records: Vec<_> =
            (0..n).map(|i| rec(&format!("T{i}"), json!(rng.gen_range(0..3)), rng.gen_range(0..60_000))).collect();
        let samples: Vec<_> = {
            let mut s: Vec<_> = (0..rng.gen_range(0..30))
                .map(|_| sample(rng.gen_range(0..60_000), key(&mut rng), num(rng.gen_range(0..3) as f64)))
                .collect();
            s.sort_by_key(|x| x.timestamp);
            s
        };
        let t1 = rng.gen_range(0.0..5.0);
        let t2 = t1 + rng.gen_range(0.0..10.0);
        let narrow = correlate(&tasks, &records, &samples, t1);
        let wide = correlate(&tasks, &records, &samples, t2);
        demotions += narrow.iter().zip(&wide).filter(|(a, b)| a.verdict == Verdict::Agree && b.verdict != Verdict::Agree).count();
    }
    ensure!(demotions == 0, "{demotions} agree verdicts demoted by a wider tolerance");
    Ok("100/100 ground-truth records classified at 2 s; 0 demotions over 300 widening trials".into())
}

fn conservation_criterion() -> Check {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0xF000 + seed);
        let n = rng.gen_range(1..=40);
        let g = testkit::random_graph(&mut rng, n);
        let steps = rng.gen_range(0..=150);
        let state = testkit::random_run(&mut rng, &g, steps, |_, _| {});
        let report = build_report("r", state.events(), Arc::new(g), &[], 2.0).map_err(|e| e.to_string())?;
        let sum: usize = report.totals.values().sum();
        ensure!(sum == state.tasks().len(), "seed {seed}: totals sum to {sum}, {} tasks", state.tasks().len());
    }
    let g = compile_one("tc01.fits", "TC01");
    let script = happy_script(&g, &tc01_bindings()).map_err(|e| e.to_string())?;
    let state = run_script("tc01", Arc::new(g.clone()), &BTreeMap::new(), &script).map_err(|(_, e)| e.to_string())?;
    let report = build_report("tc01", state.events(), Arc::new(g), &[], 2.0).map_err(|e| e.to_string())?;
    let done = report.totals[&TaskStatus::Completed];
    ensure!(done == 12 && report.task_count == 12, "TC01 happy path: {done}/{} completed", report.task_count);
    ensure!(report.deviations.is_empty(), "TC01 happy path has {} deviations", report.deviations.len());
    Ok("totals conserved on 200 random runs; TC01 happy path 12/12 completed, 0 deviations".into())
}

fn cli_criterion() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let work = dir.path();
    let suite = corpus("field_tests.fits");
    let suite = suite.to_str().unwrap();
    let pkgs = work.join("pkgs");
    fits(&["lint", suite])?;
    fits(&["compile", suite, "-o", pkgs.to_str().unwrap()])?;
    let mut summary = Vec::new();
    for (id, bindings) in [("TC02", None), ("TC03", Some("sync_takeoff.bindings.json")), ("TC04", None)] {
        let pkg = pkgs.join(format!("{id}.pkg.json"));
        ensure!(pkg.is_file(), "{} not written", pkg.display());
        let mission = work.join(format!("m-{id}"));
        let mut args = vec!["simulate".to_string(), pkg.display().to_string(), "-o".into(), mission.display().to_string()];
        args.extend(["--mission-id".into(), format!("e2e-{id}")]);
        if let Some(b) = bindings {
            args.extend(["--bindings".into(), corpus(b).display().to_string()]);
        }
        fits(&args.iter().map(String::as_str).collect::<Vec<_>>())?;
        fits(&["report", mission.to_str().unwrap()])?;
        let report_path = mission.join(format!("e2e-{id}.report.json"));
        let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).map_err(|e| e.to_string())?)
            .map_err(|e| format!("{}: invalid JSON: {e}", report_path.display()))?;
        let done = report["totals"]["completed"].as_u64().unwrap_or(0);
        ensure!(done == report["task_count"].as_u64().unwrap_or(u64::MAX), "{id}: {done}/{} completed", report["task_count"]);
        summary.push(format!("{id} {done}/{done}"));
    }
    Ok(format!("lint, compile, simulate, report exit 0; valid JSON reports ({})", summary.join(", ")))
}

// ---- helpers -------------------------------------------------------------------

fn timed_graph(limit_s: u64) -> TaskGraph {
    TaskGraph {
        mission_template_id: "T".into(),
        name: "timed".into(),
        actors: vec!["pilot".into()],
        phases: vec![],
        tasks: vec![TaskNode {
            task_id: "A".into(),
            origin: TaskOrigin { scenario_id: "T".into(), step_id: "A".into(), assignment: BTreeMap::new() },
            given: vec![],
            when: "hover".into(),
            then: vec!["a".into()],
            step_type: StepType::Execution,
            responsible: Responsible::Role("pilot".into()),
            priority: Priority::default(),
            phase: String::new(),
            duration_limit: Some(limit_s),
            data_spec: None,
        }],
        conditions: vec![ConditionDecl { id: "a".into(), kind: ConditionKind::Internal }],
    }
}

fn fits(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fits")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "fits {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn spawn_server(store: &Path) -> Result<Server, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fits"))
        .args(["serve", "--store", store.to_str().unwrap(), "--listen", "127.0.0.1:0", "--tick-ms", "50"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).map_err(|e| e.to_string())?;
    let addr = line
        .split("http://")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .ok_or(format!("unexpected banner {line:?}"))?
        .to_string();
    Ok(Server { child, addr })
}

/// Minimal HTTP/1.1 client over a raw socket.
fn http(addr: &str, method: &str, path: &str, body: Option<&Value>) -> Result<(u16, Value), String> {
    let mut stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok();
    let payload = body.map(Value::to_string).unwrap_or_default();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )
    .map_err(|e| e.to_string())?;
    let mut raw = String::new();
    stream.read_to_string(&mut raw).map_err(|e| e.to_string())?;
    let status: u16 = raw.split_whitespace().nth(1).and_then(|s| s.parse().ok()).ok_or(format!("bad response {raw:?}"))?;
    let body = raw.split_once("\r\n\r\n").map(|(_, b)| b).unwrap_or("");
    Ok((status, serde_json::from_str(body).unwrap_or(Value::Null)))
}

/// Drives a mission through a real `fits serve` process, kills it with
/// SIGKILL mid-mission and checks the restarted process reports the same
/// digest as before the kill and as an offline replay of the log file.
fn service_kill_restart() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let graph = compile_one("tc01.fits", "TC01");
    let package: Value = serde_json::from_str(&MissionPackage::from_graph(&graph).to_json()).unwrap();
    let script = happy_script(&graph, &tc01_bindings()).map_err(|e| e.to_string())?;
    let requests: Vec<_> = script.lines.iter().filter_map(|l| http_request_for(&l.action)).collect();

    let server = spawn_server(&store)?;
    let (status, created) =
        http(&server.addr, "POST", "/missions", Some(&json!({ "package": package, "bindings": tc01_bindings(), "mission_id": "live" })))?;
    ensure!(status == 201, "create -> {status} {created}");
    for (path, body) in &requests[..10] {
        let (status, v) = http(&server.addr, "POST", &format!("/missions/live{path}"), Some(body))?;
        ensure!(status == 200, "{path} -> {status} {v}");
    }
    let (_, before) = http(&server.addr, "GET", "/missions/live", None)?;
    drop(server); // SIGKILL

    let server = spawn_server(&store)?;
    let (status, after) = http(&server.addr, "GET", "/missions/live", None)?;
    ensure!(status == 200, "after restart -> {status} {after}");
    ensure!(after["digest"] == before["digest"], "digest changed across restart");
    ensure!(after["last_seq"] == before["last_seq"], "last_seq changed across restart");
    let events = parse_ndjson(&std::fs::read_to_string(store.join("live/events.ndjson")).unwrap()).map_err(|e| e.to_string())?;
    let offline = replay("live", &events, Arc::new(graph), &BTreeMap::new()).map_err(|e| e.to_string())?;
    ensure!(Value::String(offline.digest()) == before["digest"], "offline replay digest differs");

    for (path, body) in &requests[10..] {
        let (status, v) = http(&server.addr, "POST", &format!("/missions/live{path}"), Some(body))?;
        ensure!(status == 200, "{path} after restart -> {status} {v}");
    }
    let (_, done) = http(&server.addr, "GET", "/missions/live", None)?;
    ensure!(done["totals"]["completed"] == 12 && done["status"] == "closed", "mission did not finish: {done}");
    Ok(format!("killed `fits serve` after 10 commands at seq {}, restart recovered the same digest", before["last_seq"]))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("corpus", corpus_criterion),
        ("expansion law", expansion_criterion),
        ("inlining equivalence", inlining_criterion),
        ("availability invariant", availability_criterion),
        ("replay determinism", replay_criterion),
        ("duration alarms", alarms_criterion),
        ("correlation", correlation_criterion),
        ("report conservation", conservation_criterion),
        ("end-to-end CLI", cli_criterion),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
