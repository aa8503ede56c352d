//! Score a degraded recording against its clean reference.
//!
//! `cargo run --release --example objective_metrics -- clean.wav degraded.wav`
//! With no arguments a synthetic utterance is scored against noisy copies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sslse::data::{read_wav, speech_like, white_noise};
use sslse::dsp::{mix_at_snr, Waveform, WORKING_RATE};
use sslse::metrics::{composite_scores, score_pair, MetricOptions};

fn report(label: &str, clean: &Waveform, degraded: &Waveform) -> sslse::Result<()> {
    let s = score_pair(clean, degraded, &MetricOptions::default())?.scores;
    println!(
        "{label:>10}  stoi {:.4}  segsnr {:7.3}  llr {:.4}  wss {:8.3}",
        s.stoi, s.segsnr, s.llr, s.wss
    );
    Ok(())
}

fn main() -> sslse::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [clean, degraded] = args.as_slice() {
        return report("degraded", &read_wav(clean.as_ref())?, &read_wav(degraded.as_ref())?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clean = speech_like(48_000, WORKING_RATE, &mut rng);
    let noise = white_noise(clean.len(), WORKING_RATE, &mut rng);
    report("identical", &clean, &clean)?;
    for snr in [15.0, 5.0, -5.0] {
        let noisy = mix_at_snr(&clean, &noise, snr)?.noisy;
        report(&format!("{snr} dB"), &clean, &noisy)?;
    }
    // composites need PESQ from an external tool; here with a nominal PESQ of 2.5
    let c = composite_scores(2.5, 0.6, 40.0, 5.0);
    println!("composites at pesq 2.5: csig {:.3} cbak {:.3} covl {:.3}", c.csig, c.cbak, c.covl);
    Ok(())
}
