//! A task with a 120 s limit: ticks before the deadline are silent, the
//! first one at or after it raises exactly one alarm.
//!
//! cargo run -p fits-core --example duration_alarms

use std::collections::BTreeMap;

use fits_core::dsl::parse_scenario;
use fits_core::compiler::{compile, CompileOptions};
use fits_core::engine::MissionState;

const SOURCE: &str = r#"
scenario HOVER "Timed hover"
  primary: pilot

  step 1
    when: pilot hovers sUAS at 10 m.
    then: hover is done.
    type: TE
    responsible: pilot
    duration: 2m
"#;

fn main() {
    let template = parse_scenario(SOURCE).unwrap().value;
    let graph = compile(&template, &[], &CompileOptions::default()).unwrap().graph;
    let mut mission = MissionState::start_mission("hover", graph, BTreeMap::new(), 0).unwrap();
    mission.start_task("1", "pilot", 10_000).unwrap();

    for now in [60_000, 129_999, 130_000, 200_000] {
        let alarms = mission.tick(now).unwrap();
        println!("tick at {:>7.3} s: {} alarm(s)", now as f64 / 1000.0, alarms.len());
        for a in alarms {
            println!("  {} on {} for {}", a.kind, a.task_id.unwrap_or_default(), a.actor);
        }
    }
}
