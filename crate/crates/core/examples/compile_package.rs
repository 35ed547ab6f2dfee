//! Compile TC01 (sub-process inlining + expansion over x = 1..3) into a
//! mission package.
//!
//! cargo run -p fits-core --example compile_package

use fits_core::compiler::CompileOptions;
use fits_core::library::Library;
use fits_core::package::MissionPackage;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/tc01.fits");
    let lib = Library::load(&[path]).expect("loads");
    let compiled = lib.compile("TC01", &CompileOptions::default()).expect("TC01 exists").expect("lint clean");

    for t in &compiled.graph.tasks {
        println!("{:<8} {:<12} {}", t.task_id, t.responsible.to_string(), t.when);
    }
    let package = MissionPackage::from_graph(&compiled.graph);
    println!("{} tasks; bindings required: {:?}", package.tasks.len(), package.bindings_required);
    println!("package file: {} ({} bytes)", package.file_name(), package.to_json().len());
}
