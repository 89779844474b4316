//! One PASS/FAIL line per acceptance criterion. Runs with `harness = false`
//! so the lines come out in order; exits non-zero if any criterion fails.
//!
//! `UDNPF_ACCEPT=3,5` restricts the run to the listed criteria.

use udnpf::validation::{run_criterion, ValidationOptions, CRITERIA};

fn main() {
    let selected: Vec<u8> = match std::env::var("UDNPF_ACCEPT") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => CRITERIA.to_vec(),
    };
    let opts = ValidationOptions::default();
    let mut failed = 0;
    for id in selected {
        let out = run_criterion(id, &opts);
        println!("{}", out.line());
        if !out.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
