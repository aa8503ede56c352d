//! Deterministic signal-processing kernels.
//!
//! Everything here is a pure function of its inputs. The analysis geometry
//! used throughout the crate is a 400-sample periodic Hann window with a
//! 160-sample hop at 16 kHz, reflect-padded by half a window on both sides,
//! with the frame axis truncated to `len / hop` frames (20480 samples give
//! exactly 128 frames).

mod mix;
mod resample;
mod stft;

pub use mix::{mix_at_snr, power, snr_db, Mixture};
pub use resample::resample;
pub use stft::{hann_periodic, istft, stft, SpectrogramPair, Stft};

use crate::error::{ensure, Result};

/// Sample rate every model-facing operation runs at.
pub const WORKING_RATE: u32 = 16_000;
/// STFT window length in samples (25 ms at 16 kHz).
pub const WINDOW_LEN: usize = 400;
/// STFT hop in samples (10 ms at 16 kHz).
pub const HOP: usize = 160;
/// Number of one-sided frequency bins for [`WINDOW_LEN`].
pub const FFT_BINS: usize = WINDOW_LEN / 2 + 1;

/// Mono PCM signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        ensure!(sample_rate > 0, InvalidInput, "sample rate must be positive");
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(crate::Error::InvalidInput(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of `len` samples starting at `offset`, zero-filled past the end.
    pub fn segment(&self, offset: usize, len: usize) -> Waveform {
        let mut out = vec![0.0; len];
        let end = (offset + len).min(self.samples.len());
        if offset < end {
            out[..end - offset].copy_from_slice(&self.samples[offset..end]);
        }
        Waveform {
            samples: out,
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn require_working_rate(x: &Waveform) -> Result<()> {
    ensure!(
        x.sample_rate() == WORKING_RATE,
        InvalidInput,
        "expected {WORKING_RATE} Hz input, got {} Hz (resample explicitly first)",
        x.sample_rate()
    );
    Ok(())
}
