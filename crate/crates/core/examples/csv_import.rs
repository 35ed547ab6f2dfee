//! Import a spreadsheet-exported scenario and compare it with the DSL form.
//!
//! cargo run -p fits-core --example csv_import

use fits_core::dsl::{import_csv_template, parse_scenario};

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
    let csv = std::fs::read_to_string(format!("{dir}/tc01.csv")).expect("tc01.csv");
    let dsl = std::fs::read_to_string(format!("{dir}/tc01.fits")).expect("tc01.fits");

    let from_csv = import_csv_template(&csv, "tc01.csv", "tc01").expect("csv imports").value;
    let from_dsl = parse_scenario(&dsl).expect("dsl parses").value;

    println!("{} \"{}\"", from_csv.id, from_csv.name);
    for step in &from_csv.steps {
        println!("  step {:<6} {}", step.step_id, step.when);
    }
    println!("identical to the DSL template: {}", from_csv == from_dsl);
}
