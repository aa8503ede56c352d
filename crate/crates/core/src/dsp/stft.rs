use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{require_working_rate, Waveform, WORKING_RATE};
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;

const WINDOW_SUM_FLOOR: f64 = 1e-8;

/// Magnitude, phase and log1p magnitude of one utterance, frames x bins.
#[derive(Debug, Clone)]
pub struct SpectrogramPair {
    pub magnitude: Matrix,
    pub phase: Matrix,
    pub log1p_mag: Matrix,
    pub frame_hop: usize,
    pub window_len: usize,
}

impl SpectrogramPair {
    pub fn frames(&self) -> usize {
        self.magnitude.rows()
    }

    pub fn fft_bins(&self) -> usize {
        self.window_len / 2 + 1
    }
}

/// `0.5 - 0.5 cos(2 pi n / N)`, the DFT-even Hann window.
pub fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Reusable STFT/ISTFT plan for one window length and hop.
pub struct Stft {
    window_len: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft")
            .field("window_len", &self.window_len)
            .field("hop", &self.hop)
            .finish()
    }
}

impl Stft {
    pub fn new(window_len: usize, hop: usize) -> Result<Self> {
        ensure!(
            window_len >= 2 && window_len % 2 == 0,
            InvalidInput,
            "window length must be even and >= 2, got {window_len}"
        );
        ensure!(
            hop > 0 && hop <= window_len,
            InvalidInput,
            "hop must be in 1..={window_len}, got {hop}"
        );
        let mut planner = FftPlanner::new();
        Ok(Self {
            window_len,
            hop,
            window: hann_periodic(window_len),
            forward: planner.plan_fft_forward(window_len),
            inverse: planner.plan_fft_inverse(window_len),
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        len / self.hop
    }

    pub fn forward(&self, x: &Waveform) -> Result<SpectrogramPair> {
        ensure!(!x.is_empty(), InvalidInput, "empty signal");
        require_working_rate(x)?;
        let samples = x.samples();
        let frames = self.frames_for(samples.len());
        ensure!(
            frames > 0,
            InvalidInput,
            "signal of {} samples is shorter than one hop ({})",
            samples.len(),
            self.hop
        );
        let n = self.window_len;
        let half = (n / 2) as isize;
        let bins = self.bins();
        let mut magnitude = Matrix::zeros(frames, bins);
        let mut phase = Matrix::zeros(frames, bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = (t * self.hop) as isize - half;
            for (k, slot) in buf.iter_mut().enumerate() {
                let v = samples[reflect_index(start + k as isize, samples.len())];
                *slot = Complex64::new(v * self.window[k], 0.0);
            }
            self.forward.process(&mut buf);
            for (f, c) in buf.iter().take(bins).enumerate() {
                magnitude[(t, f)] = c.norm();
                phase[(t, f)] = c.im.atan2(c.re);
            }
        }
        let log1p_mag = magnitude.map(f64::ln_1p);
        Ok(SpectrogramPair {
            magnitude,
            phase,
            log1p_mag,
            frame_hop: self.hop,
            window_len: n,
        })
    }

    /// Overlap-add inverse with squared-window normalization.
    pub fn inverse(&self, mag: &Matrix, phase: &Matrix, out_len: usize) -> Result<Waveform> {
        ensure!(
            mag.shape() == phase.shape(),
            Shape,
            "magnitude {:?} and phase {:?} differ in shape",
            mag.shape(),
            phase.shape()
        );
        ensure!(
            mag.cols() == self.bins(),
            Shape,
            "expected {} bins, got {}",
            self.bins(),
            mag.cols()
        );
        let frames = mag.rows();
        ensure!(
            frames == self.frames_for(out_len),
            Shape,
            "{frames} frames cannot produce {out_len} samples at hop {}",
            self.hop
        );
        let n = self.window_len;
        let half = n / 2;
        let padded = out_len + n;
        let mut acc = vec![0.0; padded];
        let mut wsum = vec![0.0; padded];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for t in 0..frames {
            let (m, p) = (mag.row(t), phase.row(t));
            for f in 0..=half {
                buf[f] = Complex64::from_polar(m[f], p[f]);
            }
            // Hermitian completion; DC and Nyquist bins must be real.
            buf[0].im = 0.0;
            buf[half].im = 0.0;
            for f in 1..half {
                buf[n - f] = buf[f].conj();
            }
            self.inverse.process(&mut buf);
            let start = t * self.hop;
            for k in 0..n {
                let w = self.window[k];
                acc[start + k] += buf[k].re * scale * w;
                wsum[start + k] += w * w;
            }
        }
        let mut out = vec![0.0; out_len];
        for (i, o) in out.iter_mut().enumerate() {
            let ws = wsum[i + half];
            if ws < WINDOW_SUM_FLOOR {
                if i >= half && i + half < out_len {
                    return Err(Error::Numerical(format!(
                        "window sum {ws:e} at interior sample {i}"
                    )));
                }
                continue;
            }
            *o = acc[i + half] / ws;
        }
        Waveform::new(out, WORKING_RATE)
    }
}

/// Mirror-reflect an out-of-range index into `0..len` (edge sample not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

pub fn stft(x: &Waveform, window_len: usize, hop: usize) -> Result<SpectrogramPair> {
    Stft::new(window_len, hop)?.forward(x)
}

pub fn istft(
    mag: &Matrix,
    phase: &Matrix,
    window_len: usize,
    hop: usize,
    out_len: usize,
) -> Result<Waveform> {
    Stft::new(window_len, hop)?.inverse(mag, phase, out_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{FFT_BINS, HOP, WINDOW_LEN};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    fn interior_snr(x: &[f64], y: &[f64], margin: usize) -> f64 {
        let range = margin..x.len() - margin;
        let sig: f64 = x[range.clone()].iter().map(|v| v * v).sum();
        let err: f64 = range.map(|i| (x[i] - y[i]).powi(2)).sum();
        10.0 * (sig / err).log10()
    }

    #[test]
    fn reflect_matches_numpy_convention() {
        let idx: Vec<_> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn crop_geometry_is_128_by_201() {
        let spec = stft(&noise(20_480, 1), WINDOW_LEN, HOP).unwrap();
        assert_eq!(spec.magnitude.shape(), (128, FFT_BINS));
        assert_eq!(spec.fft_bins(), 201);
    }

    #[test]
    fn silence_has_zero_magnitude() {
        let spec = stft(&Waveform::zeros(20_480, 16_000), WINDOW_LEN, HOP).unwrap();
        assert!(spec.magnitude.as_slice().iter().all(|&m| m == 0.0));
        assert!(spec.log1p_mag.as_slice().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sine_peaks_at_expected_bin() {
        let x: Vec<f64> = (0..16_000)
            .map(|n| (2.0 * PI * 1000.0 * n as f64 / 16_000.0).sin())
            .collect();
        let x = Waveform::new(x, 16_000).unwrap();
        let spec = stft(&x, WINDOW_LEN, HOP).unwrap();
        for t in 2..spec.frames() - 2 {
            let row = spec.magnitude.row(t);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(argmax, 25, "frame {t}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            stft(&Waveform::zeros(0, 16_000), 400, 160),
            Err(Error::InvalidInput(_))
        ));
        assert!(Waveform::new(vec![0.0, f64::NAN], 16_000).is_err());
        assert!(matches!(
            stft(&Waveform::zeros(1000, 8_000), 400, 160),
            Err(Error::InvalidInput(_))
        ));
        assert!(Stft::new(401, 160).is_err());
        assert!(Stft::new(400, 401).is_err());
    }

    #[test]
    fn round_trip_white_noise() {
        let x = noise(16_000, 7);
        let spec = stft(&x, WINDOW_LEN, HOP).unwrap();
        let y = istft(&spec.magnitude, &spec.phase, WINDOW_LEN, HOP, x.len()).unwrap();
        assert_eq!(y.len(), x.len());
        assert!(interior_snr(x.samples(), y.samples(), WINDOW_LEN / 2) >= 60.0);
    }

    #[test]
    fn zero_magnitude_inverts_to_silence() {
        let mag = Matrix::zeros(128, FFT_BINS);
        let phase = Matrix::filled(128, FFT_BINS, 0.3);
        let y = istft(&mag, &phase, WINDOW_LEN, HOP, 20_480).unwrap();
        assert!(y.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inverse_shape_errors() {
        let mag = Matrix::zeros(128, FFT_BINS);
        let phase = Matrix::zeros(127, FFT_BINS);
        assert!(matches!(
            istft(&mag, &phase, WINDOW_LEN, HOP, 20_480),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            istft(&mag, &mag, WINDOW_LEN, HOP, 30_000),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn sparse_hop_hits_numerical_guard() {
        // hop == window leaves the periodic-Hann zero uncovered in the interior.
        let plan = Stft::new(400, 400).unwrap();
        let mag = Matrix::filled(10, 201, 1.0);
        let phase = Matrix::zeros(10, 201);
        assert!(matches!(
            plan.inverse(&mag, &phase, 4000),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn sign_flip_keeps_magnitude_and_shifts_phase() {
        let x = noise(4000, 3);
        let neg = x.scaled(-1.0);
        let a = stft(&x, WINDOW_LEN, HOP).unwrap();
        let b = stft(&neg, WINDOW_LEN, HOP).unwrap();
        for (i, (&ma, &mb)) in a
            .magnitude
            .as_slice()
            .iter()
            .zip(b.magnitude.as_slice())
            .enumerate()
        {
            assert!((ma - mb).abs() < 1e-9);
            if ma > 1e-6 {
                let d = (a.phase.as_slice()[i] - b.phase.as_slice()[i]).rem_euclid(2.0 * PI);
                assert!((d - PI).abs() < 1e-6, "phase shift {d}");
            }
        }
    }
}
