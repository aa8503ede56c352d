//! Analyse a signal with the fixed 400/160 STFT and resynthesise it.
//!
//! `cargo run --release --example stft_roundtrip -- [input.wav]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sslse::data::{read_wav, speech_like};
use sslse::dsp::{istft, resample, snr_db, stft, HOP, WINDOW_LEN, WORKING_RATE};

fn main() -> sslse::Result<()> {
    let x = match std::env::args().nth(1) {
        Some(path) => resample(&read_wav(path.as_ref())?, WORKING_RATE)?,
        None => speech_like(20_480, WORKING_RATE, &mut ChaCha8Rng::seed_from_u64(0)),
    };
    let spec = stft(&x, WINDOW_LEN, HOP)?;
    println!("{} samples -> {} frames x {} bins", x.len(), spec.frames(), spec.fft_bins());
    let peak = spec.log1p_mag.as_slice().iter().cloned().fold(0.0, f64::max);
    println!("log1p magnitude peak {peak:.3}");

    let y = istft(&spec.magnitude, &spec.phase, WINDOW_LEN, HOP, x.len())?;
    let err: Vec<f64> = x.samples().iter().zip(y.samples()).map(|(a, b)| a - b).collect();
    println!("round trip SNR {:.1} dB", snr_db(x.samples(), &err));
    Ok(())
}
