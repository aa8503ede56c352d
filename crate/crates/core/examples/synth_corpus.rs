//! Build a synthetic noisy corpus on disk and reload it.
//!
//! `cargo run --release --example synth_corpus -- [out_dir]`

use sslse::data::{load_corpus, toy_corpus, write_corpus};
use sslse::dsp::snr_db;

fn main() -> sslse::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "synth_corpus".into());
    let pairs = toy_corpus(8, 32_000, &[0.0, 5.0, 10.0, 15.0], 7)?;
    write_corpus(&pairs, dir.as_ref())?;
    let back = load_corpus(dir.as_ref())?;
    for p in &back {
        let noise: Vec<f64> = p.noisy.samples().iter().zip(p.clean.samples()).map(|(y, s)| y - s).collect();
        println!("{}: {} samples, SNR {:5.2} dB", p.id, p.len(), snr_db(p.clean.samples(), &noise));
    }
    println!("{} pairs written to {dir}", back.len());
    Ok(())
}
