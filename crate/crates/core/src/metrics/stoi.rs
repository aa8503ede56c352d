//! Short-time objective intelligibility (Taal et al., 2011), following the
//! widely used reference port: 10 kHz, 256-sample frames, 512-point FFT,
//! 15 third-octave bands from 150 Hz, 30-frame segments, -15 dB clipping.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::{self, Waveform};
use crate::error::{ensure, Result};

const FS: u32 = 10_000;
const N_FRAME: usize = 256;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const N_SEG: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// `hanning(n + 2)[1:-1]`: symmetric Hann without the zero endpoints.
fn hanning_inner(n: usize) -> Vec<f64> {
    let m = (n + 2) as f64;
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (m - 1.0)).cos())
        .collect()
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> impl Iterator<Item = usize> {
    // range(0, len - frame, hop): the final full frame is excluded, as in the reference
    (0..len.saturating_sub(frame)).step_by(hop)
}

/// Drop frames more than `DYN_RANGE_DB` below the loudest clean frame, then overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hop = N_FRAME / 2;
    let w = hanning_inner(N_FRAME);
    let starts: Vec<usize> = frame_starts(x.len(), N_FRAME, hop).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..N_FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * hop + N_FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (k, &s) in kept.iter().enumerate() {
        for i in 0..N_FRAME {
            xs[k * hop + i] += w[i] * x[s + i];
            ys[k * hop + i] += w[i] * y[s + i];
        }
    }
    (xs, ys)
}

/// Third-octave band matrix rows as `[lo, hi)` bin ranges.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let f: Vec<f64> = (0..bins).map(|i| i as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |target: f64| {
        (0..bins)
            .min_by(|&a, &b| (f[a] - target).powi(2).total_cmp(&(f[b] - target).powi(2)))
            .expect("non-empty")
    };
    (0..NUM_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes `[band][frame]`.
fn band_envelopes(x: &[f64], bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let hop = N_FRAME / 2;
    let w = hanning_inner(N_FRAME);
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let mut buf = vec![Complex::new(0.0, 0.0); NFFT];
    let mut env = vec![Vec::new(); bands.len()];
    for s in frame_starts(x.len(), N_FRAME, hop) {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..N_FRAME {
            buf[i].re = w[i] * x[s + i];
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let p: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            env[b].push(p.sqrt());
        }
    }
    env
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

pub fn stoi(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    ensure!(
        clean.len() == degraded.len(),
        InvalidInput,
        "length mismatch: {} vs {} samples",
        clean.len(),
        degraded.len()
    );
    ensure!(
        clean.sample_rate() == degraded.sample_rate(),
        InvalidInput,
        "sample-rate mismatch: {} vs {}",
        clean.sample_rate(),
        degraded.sample_rate()
    );
    let (x, y) = if clean.sample_rate() == FS {
        (clean.samples().to_vec(), degraded.samples().to_vec())
    } else {
        (
            dsp::resample(clean, FS)?.into_samples(),
            dsp::resample(degraded, FS)?.into_samples(),
        )
    };
    let (x, y) = remove_silent_frames(&x, &y);
    let bands = third_octave_bands();
    let xe = band_envelopes(&x, &bands);
    let ye = band_envelopes(&y, &bands);
    let frames = xe[0].len();
    ensure!(
        frames >= N_SEG,
        InvalidInput,
        "only {frames} speech-active frames after silence removal, need {N_SEG}"
    );
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for m in N_SEG..=frames {
        for b in 0..NUM_BANDS {
            let xs = &xe[b][m - N_SEG..m];
            let ys = &ye[b][m - N_SEG..m];
            let alpha = norm(xs) / (norm(ys) + EPS);
            let yp: Vec<f64> = ys
                .iter()
                .zip(xs)
                .map(|(yv, xv)| (yv * alpha).min(xv * (1.0 + clip)))
                .collect();
            let yc = centered(&yp);
            let xc = centered(xs);
            let (ny, nx) = (norm(&yc) + EPS, norm(&xc) + EPS);
            total += yc.iter().zip(&xc).map(|(a, b)| (a / ny) * (b / nx)).sum::<f64>();
            count += 1;
        }
    }
    Ok(total / count as f64)
}
