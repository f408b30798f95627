//! Runs every validation criterion and prints one PASS/FAIL line each.
//! Exits nonzero when any criterion fails.

use std::process::ExitCode;

fn main() -> ExitCode {
    // Honour `cargo test -- <filter>` by criterion number or name.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, check) in uot_validation::criteria() {
        if !filters.is_empty() && !filters.iter().any(|f| *f == id.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let report = uot_validation::run(id, name, check);
        println!("{}", report.line());
        ran += 1;
        if !report.passed {
            failed.push(id);
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
