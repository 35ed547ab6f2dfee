//! Drive a mission by hand: confirm, start, complete, record; show a role's
//! task list; rebuild the state from its log.
//!
//! cargo run -p fits-core --example run_mission

use std::collections::BTreeMap;
use std::sync::Arc;

use fits_core::compiler::CompileOptions;
use fits_core::engine::{parse_ndjson, replay, to_ndjson, MissionState};
use fits_core::library::Library;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/tc01.fits");
    let lib = Library::load(&[path]).unwrap();
    let graph = Arc::new(lib.compile("TC01", &CompileOptions::default()).unwrap().unwrap().graph);
    let bindings: BTreeMap<String, String> = (1..=3).map(|i| (format!("sUAS_{i}"), format!("pilot_{i}"))).collect();

    let mut mission = MissionState::start_shared("demo", graph.clone(), bindings, 0).unwrap();
    mission.confirm_condition("sUAS1 is available at test site.", "pilot_1", 1_000).unwrap();
    mission.start_task("11.1", "pilot_1", 2_000).unwrap();

    // Someone else's task is refused.
    if let Err(e) = mission.complete_task("11.1", "pilot_2", 3_000) {
        println!("refused: {e}");
    }
    mission.complete_task("11.1", "pilot_1", 3_000).unwrap();

    println!("pilot_1 sees:");
    for v in mission.view_tasks("pilot_1").unwrap() {
        println!("  {:<8} {:<11} p{} {}", v.task_id, v.status.as_str(), v.priority.get(), v.when);
    }

    let log = to_ndjson(mission.events());
    print!("{log}");
    let rebuilt = replay("demo", &parse_ndjson(&log).unwrap(), graph, &BTreeMap::new()).unwrap();
    println!("digest {} (replayed: {})", mission.digest(), rebuilt.digest() == mission.digest());
}
