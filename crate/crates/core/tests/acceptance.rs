//! Acceptance criteria. One line per criterion; exits non-zero if any fails.
//!
//! Set `EHAOI_QUICK=1` to skip the Monte Carlo criterion.

use std::process::ExitCode;
use std::time::Instant;

use ehaoi::verify::{run_suite, Oracle, VerifyOptions};

fn main() -> ExitCode {
    let quick = std::env::var_os("EHAOI_QUICK").is_some();
    let start = Instant::now();
    let outcomes = run_suite(&Oracle::reference(), VerifyOptions { quick, ..Default::default() });
    println!();
    for o in &outcomes {
        println!("{o}");
        for note in &o.notes {
            println!("       note: {note}");
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    println!("\nacceptance: {} of {} criteria passed in {:.1}s", outcomes.len() - failed, outcomes.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
