//! Compare reverse-mode gradients with central differences on every graph
//! primitive and on the BLSTM, attention, fusion and mask-model graphs.
//!
//! `cargo run --release --example gradcheck_suite -- [seeds]`

use sslse::gradsuite::{run_suite, TOLERANCE};

fn main() -> sslse::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let results = run_suite(seeds)?;
    for r in &results {
        let mark = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<20} {:.2e}  {mark}  (seed {}, analytic {:.6e}, numeric {:.6e})",
            r.case, r.worst_rel_error, r.worst_seed, r.analytic, r.numeric
        );
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} cases, {failed} above {TOLERANCE:e}", results.len());
    Ok(())
}
