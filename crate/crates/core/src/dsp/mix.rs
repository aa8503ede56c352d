use super::Waveform;
use crate::error::{ensure, Result};

/// Mean square of a signal.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10 log10(P_signal / P_noise)`.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (power(signal) / power(noise)).log10()
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub noisy: Waveform,
    /// Gain applied to the (cropped) noise.
    pub noise_gain: f64,
}

/// `clean + g * noise[..len]` with `g` chosen so the mixture has the requested SNR.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64) -> Result<Mixture> {
    ensure!(
        clean.sample_rate() == noise.sample_rate(),
        InvalidInput,
        "sample rates differ: {} vs {}",
        clean.sample_rate(),
        noise.sample_rate()
    );
    ensure!(
        noise.len() >= clean.len(),
        InvalidInput,
        "noise ({} samples) shorter than clean ({} samples)",
        noise.len(),
        clean.len()
    );
    ensure!(snr_db.is_finite(), InvalidInput, "snr must be finite");
    let noise = &noise.samples()[..clean.len()];
    let pc = power(clean.samples());
    let pn = power(noise);
    ensure!(pc > 0.0, InvalidInput, "clean signal is silent");
    ensure!(pn > 0.0, InvalidInput, "noise signal is silent");
    let gain = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let mixed = clean
        .samples()
        .iter()
        .zip(noise)
        .map(|(c, n)| c + gain * n)
        .collect();
    Ok(Mixture {
        noisy: Waveform::new(mixed, clean.sample_rate())?,
        noise_gain: gain,
    })
}
