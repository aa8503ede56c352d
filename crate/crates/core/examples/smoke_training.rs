//! Train the enhancer on a small synthetic corpus and report held-out STOI.
//!
//! `cargo run --release --example smoke_training -- [steps] [seed]`

use std::time::Instant;

use sslse::enhancer::{run_smoke, smoke_config, smoke_corpus};
use sslse::fusion::Composition;

fn main() -> sslse::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = smoke_config(Composition::WsLog1p, seed);
    if let Some(steps) = args.first().and_then(|s| s.parse().ok()) {
        cfg.max_steps = steps;
    }
    let (train_pairs, test_pairs) = smoke_corpus(7)?;
    let t = Instant::now();
    let (report, out) = run_smoke(&train_pairs, &test_pairs, &cfg, 1)?;
    for r in out.log.iter().filter(|r| r.split == "val") {
        println!("step {:4}  val {:.4}", r.step, r.loss);
    }
    println!(
        "val loss {:.4} -> {:.4} (x{:.3}) at step {}",
        report.initial_val,
        report.best_val,
        report.loss_ratio(),
        report.best_step
    );
    println!(
        "held-out STOI {:.4} -> {:.4} ({:+.4}) in {:.1?}",
        report.noisy_stoi,
        report.enhanced_stoi,
        report.stoi_gain(),
        t.elapsed()
    );
    Ok(())
}
