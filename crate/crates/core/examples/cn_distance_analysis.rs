//! Layer-wise clean-noisy distance of the toy encoder across SNRs.
//!
//! `cargo run --release --example cn_distance_analysis`

use sslse::analysis::{average_curve, pearson, CurveOptions};
use sslse::data::toy_corpus;
use sslse::encoder::{EncoderConfig, ToyEncoder};

fn main() -> sslse::Result<()> {
    let enc = ToyEncoder::new(EncoderConfig::default(), 0)?;
    let mut curves = Vec::new();
    for snr in [0.0, 10.0, 20.0] {
        let pairs = toy_corpus(6, 16_000, &[snr], 2)?;
        let stacks = pairs
            .iter()
            .map(|p| Ok((enc.forward(&p.clean)?, enc.forward(&p.noisy)?)))
            .collect::<sslse::Result<Vec<_>>>()?;
        let curve = average_curve(&stacks, CurveOptions::default())?;
        let raw: Vec<String> = curve.raw.iter().map(|d| format!("{d:.3}")).collect();
        println!("{snr:>4} dB: {}", raw.join(" "));
        curves.push(curve);
    }
    let r = pearson(&curves[0].normalized, &curves[2].normalized, 0)?;
    println!("pearson between 0 dB and 20 dB normalized curves: {r:.3}");
    Ok(())
}
