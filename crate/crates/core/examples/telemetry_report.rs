//! Fly TC02 in simulation, fake a flight-controller log and build the
//! post-mission report with TD values checked against it.
//!
//! cargo run -p fits-core --example telemetry_report

use std::collections::BTreeMap;
use std::sync::Arc;

use fits_core::analysis::{build_report, ingest_telemetry, render_markdown, DEFAULT_TOLERANCE_S};
use fits_core::compiler::CompileOptions;
use fits_core::engine::EventKind;
use fits_core::library::Library;
use fits_core::sim::{happy_script, run_script};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/takeoff.fits");
    let lib = Library::load(&[path]).unwrap();
    let graph = Arc::new(lib.compile("TC02", &CompileOptions::default()).unwrap().unwrap().graph);
    let script = happy_script(&graph, &BTreeMap::new()).unwrap();
    let mission = run_script("flight-7", graph.clone(), &BTreeMap::new(), &script).map_err(|(_, e)| e).unwrap();

    // Telemetry that agrees with the first recorded value (1 s later) and
    // contradicts the second.
    let mut csv = String::from("timestamp,key,value\n");
    let recorded: Vec<_> = mission.events().iter().filter(|e| e.kind == EventKind::DataRecorded).collect();
    for (i, e) in recorded.iter().take(2).enumerate() {
        let task = graph.task(e.task_id.as_deref().unwrap()).unwrap();
        let key = task.data_spec.as_ref().and_then(|d| d.telemetry_key.clone()).unwrap();
        let value = if i == 0 { e.payload["value"].to_string().trim_matches('"').to_string() } else { "-1".into() };
        csv.push_str(&format!("{},{key},{value}\n", e.timestamp + 1_000));
    }
    let telemetry = ingest_telemetry(&csv, "fc.csv").unwrap();

    let report = build_report("flight-7", mission.events(), graph, &telemetry.samples, DEFAULT_TOLERANCE_S).unwrap();
    println!("{}", render_markdown(&report));
}
