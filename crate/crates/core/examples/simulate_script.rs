//! Run an action script against TC02 and print the outcome; the happy-path
//! generator writes the script when none is given.
//!
//! cargo run -p fits-core --example simulate_script [script.txt]

use std::collections::BTreeMap;
use std::sync::Arc;

use fits_core::compiler::CompileOptions;
use fits_core::engine::TaskStatus;
use fits_core::library::Library;
use fits_core::sim::{happy_script, parse_script, run_script};

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/takeoff.fits");
    let lib = Library::load(&[path]).unwrap();
    let graph = lib.compile("TC02", &CompileOptions::default()).unwrap().unwrap().graph;

    let script = match std::env::args().nth(1) {
        Some(file) => parse_script(&std::fs::read_to_string(file).unwrap()).unwrap_or_else(|e| panic!("{e}")),
        None => happy_script(&graph, &BTreeMap::new()).unwrap(),
    };
    println!("{} script lines, e.g.:", script.lines.len());
    for line in script.lines.iter().take(6) {
        println!("  {}", line.action);
    }

    match run_script("sim", Arc::new(graph), &BTreeMap::new(), &script) {
        Ok(state) => println!(
            "{}/{} completed, closed = {}, {} events",
            state.count(TaskStatus::Completed),
            state.tasks().len(),
            state.is_closed(),
            state.events().len()
        ),
        Err((_, e)) => println!("stopped: {e}"),
    }
}
