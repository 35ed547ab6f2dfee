//! Parse an inline scenario and print what the linter finds.
//!
//! cargo run -p fits-core --example lint_scenario

use fits_core::compiler::{lint, lint_with, CompileOptions};
use fits_core::dsl::parse_scenario;

const SOURCE: &str = r#"
scenario DEMO "Hover check"
  primary: mission_commander
  supporting: pilot

  step 1
    given external: sUAS is on the pad.
    when: pilot arms sUAS.
    then: sUAS is armed.
    type: TE
    responsible: pilot

  step 2
    given: sUAS is armed.
    given: weather is go.
    when: pilot takes off and hovers.
    then: sUAS is hovering.
    type: TE
    responsible: pilot

  step 3
    given: sUAS is hovering.
    when: pilot reads the hover altitude.
    then: altitude is logged.
    type: TD
    responsible: pilot
    data: altitude number range 0..120 telemetry altitude
"#;

fn main() {
    let template = match parse_scenario(SOURCE) {
        Ok(parsed) => parsed.value,
        Err(diags) => {
            for d in diags {
                eprintln!("{d}");
            }
            std::process::exit(1);
        }
    };

    // Nothing produces "weather is go", so strict lint rejects step 2.
    let strict = lint(&template, &[]);
    println!("strict: passed = {}", strict.passed);
    for f in &strict.findings {
        println!("  {f}");
    }

    let relaxed = lint_with(&template, &[], &CompileOptions { auto_external: true });
    println!("auto-external: passed = {}", relaxed.passed);
    for f in &relaxed.findings {
        println!("  {f}");
    }
}
