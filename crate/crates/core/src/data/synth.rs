//! Synthetic stand-ins for speech and noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dsp::Waveform;

/// Voiced "syllables": harmonic tones with a drifting fundamental, a smooth
/// amplitude envelope and short pauses in between. Peak amplitude about 0.5.
pub fn speech_like(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Waveform {
    let fs = sample_rate as f64;
    let mut out = vec![0.0; len];
    let mut pos = rng.gen_range(0..(0.05 * fs) as usize + 1);
    while pos < len {
        let dur = (rng.gen_range(0.15..0.35) * fs) as usize;
        let f0_start: f64 = rng.gen_range(100.0..240.0);
        let f0_end = f0_start * rng.gen_range(0.8..1.25);
        // crude formant emphasis
        let formant = rng.gen_range(500.0..1500.0);
        let harmonics = ((0.45 * fs.min(8000.0)) / f0_start.max(f0_end)) as usize;
        let mut phase = vec![0.0; harmonics];
        for (i, o) in out.iter_mut().enumerate().skip(pos).take(dur.min(len - pos)) {
            let u = (i - pos) as f64 / dur as f64;
            let f0 = f0_start + (f0_end - f0_start) * u;
            let env = (PI * u).sin().powi(2);
            let mut v = 0.0;
            for (k, ph) in phase.iter_mut().enumerate() {
                let f = f0 * (k + 1) as f64;
                *ph += 2.0 * PI * f / fs;
                let gain = 1.0 / (k + 1) as f64 + 0.6 * (-((f - formant) / 300.0).powi(2)).exp();
                v += gain * ph.sin();
            }
            *o += 0.25 * env * v;
        }
        pos += dur + (rng.gen_range(0.03..0.12) * fs) as usize;
    }
    Waveform::new(out, sample_rate).expect("finite by construction")
}

pub fn white_noise(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Waveform {
    let s = (0..len).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    Waveform::new(s, sample_rate).expect("finite by construction")
}

/// Several overlapping [`speech_like`] talkers.
pub fn babble_noise(len: usize, sample_rate: u32, rng: &mut impl Rng) -> Waveform {
    let talkers = 20;
    let mut acc = vec![0.0; len];
    for _ in 0..talkers {
        let t = speech_like(len, sample_rate, rng);
        acc.iter_mut().zip(t.samples()).for_each(|(a, s)| *a += s);
    }
    let scale = 1.0 / (talkers as f64).sqrt();
    Waveform::new(acc.into_iter().map(|v| v * scale).collect(), sample_rate).expect("finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    White,
    Babble,
}

pub fn noise(kind: NoiseKind, len: usize, sample_rate: u32, rng: &mut impl Rng) -> Waveform {
    match kind {
        NoiseKind::White => white_noise(len, sample_rate, rng),
        NoiseKind::Babble => babble_noise(len, sample_rate, rng),
    }
}
