//! Segmental SNR, log-likelihood ratio and weighted spectral slope.
//!
//! LLR and WSS follow Loizou's composite-measure reference code: 30 ms frames
//! with a quarter-frame skip, the window `0.5 (1 - cos(2 pi n / (N + 1)))`
//! for `n = 1..N`, and the mean of the lowest `retention` fraction of frame
//! distortions.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dsp::Waveform;
use crate::error::{ensure, Result};

pub const SEGSNR_FLOOR_DB: f64 = -10.0;
pub const SEGSNR_CEIL_DB: f64 = 35.0;
/// Clean-frame energy below which a segmental-SNR frame counts as silent.
pub const SILENT_ENERGY: f64 = 1e-10;

/// Frame-level result of LLR or WSS.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeasure {
    /// Mean over the retained lowest frames.
    pub value: f64,
    pub frames_used: usize,
    pub frames_skipped: usize,
}

fn check_pair(clean: &Waveform, degraded: &Waveform) -> Result<()> {
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
    Ok(())
}

/// Mean frame SNR over non-overlapping 32 ms rectangular frames, each clamped to
/// `[-10, 35]` dB. Frames whose clean energy is below [`SILENT_ENERGY`] are skipped.
pub fn segmental_snr(clean: &Waveform, degraded: &Waveform) -> Result<f64> {
    check_pair(clean, degraded)?;
    let frame = (0.032 * clean.sample_rate() as f64).round() as usize;
    let (x, y) = (clean.samples(), degraded.samples());
    let mut total = 0.0;
    let mut n = 0usize;
    for s in (0..x.len() / frame).map(|k| k * frame) {
        let sig: f64 = x[s..s + frame].iter().map(|v| v * v).sum();
        if sig < SILENT_ENERGY {
            continue;
        }
        let err: f64 = x[s..s + frame].iter().zip(&y[s..s + frame]).map(|(a, b)| (a - b).powi(2)).sum();
        let snr = if err == 0.0 {
            SEGSNR_CEIL_DB
        } else {
            10.0 * (sig / err).log10()
        };
        total += snr.clamp(SEGSNR_FLOOR_DB, SEGSNR_CEIL_DB);
        n += 1;
    }
    ensure!(n > 0, InvalidInput, "every segmental-SNR frame is silent");
    Ok(total / n as f64)
}

struct Framing {
    len: usize,
    skip: usize,
    window: Vec<f64>,
}

impl Framing {
    fn new(sample_rate: u32) -> Self {
        let len = (0.030 * sample_rate as f64).round() as usize;
        let window = (1..=len)
            .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / (len as f64 + 1.0)).cos()))
            .collect();
        Self {
            len,
            skip: len / 4,
            window,
        }
    }

    /// `floor(L / skip - len / skip)` frames, as the reference loop bound.
    fn count(&self, samples: usize) -> usize {
        let n = samples as f64 / self.skip as f64 - self.len as f64 / self.skip as f64;
        if n <= 0.0 {
            0
        } else {
            n.floor() as usize
        }
    }

    fn frame(&self, x: &[f64], k: usize) -> Vec<f64> {
        let s = k * self.skip;
        x[s..s + self.len].iter().zip(&self.window).map(|(a, w)| a * w).collect()
    }
}

fn retained_mean(mut d: Vec<f64>, retention: f64) -> f64 {
    d.sort_by(f64::total_cmp);
    let keep = ((d.len() as f64 * retention).round() as usize).clamp(1, d.len());
    d[..keep].iter().sum::<f64>() / keep as f64
}

/// Autocorrelation `R[0..=order]` and predictor `[1, -a_1, ..., -a_p]` by
/// Levinson-Durbin. `None` for silent frames or an unstable recursion.
pub fn lpc(frame: &[f64], order: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = frame.len();
    let r: Vec<f64> = (0..=order)
        .map(|k| (0..n - k).map(|i| frame[i] * frame[i + k]).sum())
        .collect();
    if r[0] <= 0.0 || !r[0].is_finite() {
        return None;
    }
    let mut a = vec![0.0; order];
    let mut e = r[0];
    for i in 0..order {
        let past = a[..i].to_vec();
        let sum: f64 = (0..i).map(|j| past[j] * r[i - j]).sum();
        let k = (r[i + 1] - sum) / e;
        if !k.is_finite() || k.abs() >= 1.0 {
            return None;
        }
        a[i] = k;
        for j in 0..i {
            a[j] = past[j] - k * past[i - 1 - j];
        }
        e *= 1.0 - k * k;
        if e <= 0.0 {
            return None;
        }
    }
    let mut poly = vec![1.0];
    poly.extend(a.iter().map(|v| -v));
    Some((r, poly))
}

/// `a R a^T` with `R` the symmetric Toeplitz matrix built from `r`.
fn toeplitz_quad(a: &[f64], r: &[f64]) -> f64 {
    let p = a.len();
    let mut total = 0.0;
    for i in 0..p {
        for j in 0..p {
            total += a[i] * r[i.abs_diff(j)] * a[j];
        }
    }
    total
}

/// Log-likelihood ratio; per frame `min(2, ln(a_d R_c a_d' / a_c R_c a_c'))`.
pub fn llr(clean: &Waveform, degraded: &Waveform, retention: f64) -> Result<FrameMeasure> {
    check_pair(clean, degraded)?;
    let fr = Framing::new(clean.sample_rate());
    let order = if clean.sample_rate() < 10_000 { 10 } else { 16 };
    let mut d = Vec::new();
    let mut skipped = 0;
    for k in 0..fr.count(clean.len()) {
        let cf = fr.frame(clean.samples(), k);
        let pf = fr.frame(degraded.samples(), k);
        match (lpc(&cf, order), lpc(&pf, order)) {
            (Some((rc, ac)), Some((_, ap))) => {
                let num = toeplitz_quad(&ap, &rc);
                let den = toeplitz_quad(&ac, &rc);
                d.push((num / den).ln().min(2.0));
            }
            _ => skipped += 1,
        }
    }
    ensure!(!d.is_empty(), InvalidInput, "no frame with a usable LPC fit");
    Ok(FrameMeasure {
        frames_used: d.len(),
        value: retained_mean(d, retention),
        frames_skipped: skipped,
    })
}

const NUM_CRIT: usize = 25;
const CENT_FREQ: [f64; NUM_CRIT] = [
    50.0000, 120.000, 190.000, 260.000, 330.000, 400.000, 470.000, 540.000, 617.372, 703.378,
    798.717, 904.128, 1020.38, 1148.30, 1288.72, 1442.54, 1610.70, 1794.16, 1993.93, 2211.08,
    2446.71, 2701.97, 2978.04, 3276.17, 3597.63,
];
const BANDWIDTH: [f64; NUM_CRIT] = [
    70.0000, 70.0000, 70.0000, 70.0000, 70.0000, 70.0000, 70.0000, 77.3724, 86.0056, 95.3398,
    105.411, 116.256, 127.914, 140.423, 153.823, 168.154, 183.457, 199.776, 217.153, 235.631,
    255.255, 276.072, 298.126, 321.465, 346.136,
];
const K_MAX: f64 = 20.0;
const K_LOCMAX: f64 = 1.0;

fn crit_filters(sample_rate: u32, half: usize) -> Vec<Vec<f64>> {
    let max_freq = sample_rate as f64 / 2.0;
    let min_factor = (-30.0f64 / (2.0 * 2.303)).exp();
    (0..NUM_CRIT)
        .map(|i| {
            let f0 = (CENT_FREQ[i] / max_freq * half as f64).floor();
            let bw = BANDWIDTH[i] / max_freq * half as f64;
            let norm = BANDWIDTH[0].ln() - BANDWIDTH[i].ln();
            (0..half)
                .map(|j| {
                    let v = (-11.0 * ((j as f64 - f0) / bw).powi(2) + norm).exp();
                    if v > min_factor {
                        v
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Nearest spectral peak for each band, searching along the slope direction.
fn local_peaks(energy: &[f64], slope: &[f64]) -> Vec<f64> {
    (0..NUM_CRIT - 1)
        .map(|i| {
            if slope[i] > 0.0 {
                let mut n = i;
                while n + 1 < NUM_CRIT && slope[n] > 0.0 {
                    n += 1;
                }
                energy[n - 1]
            } else {
                let mut n = i as isize;
                while n >= 0 && slope[n as usize] <= 0.0 {
                    n -= 1;
                }
                energy[(n + 1) as usize]
            }
        })
        .collect()
}

/// Weighted spectral slope distance over 25 critical bands.
pub fn wss(clean: &Waveform, degraded: &Waveform, retention: f64) -> Result<FrameMeasure> {
    check_pair(clean, degraded)?;
    let fr = Framing::new(clean.sample_rate());
    let n_fft = (2 * fr.len).next_power_of_two();
    let half = n_fft / 2;
    let filters = crit_filters(clean.sample_rate(), half);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let band_db = |frame: &[f64]| -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(n_fft, Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..half].iter().map(|c| c.norm_sqr()).collect();
        filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(&power).map(|(a, b)| a * b).sum();
                10.0 * e.max(1e-10).log10()
            })
            .collect()
    };
    let mut d = Vec::new();
    for k in 0..fr.count(clean.len()) {
        let ce = band_db(&fr.frame(clean.samples(), k));
        let pe = band_db(&fr.frame(degraded.samples(), k));
        let cs: Vec<f64> = ce.windows(2).map(|w| w[1] - w[0]).collect();
        let ps: Vec<f64> = pe.windows(2).map(|w| w[1] - w[0]).collect();
        let cp = local_peaks(&ce, &cs);
        let pp = local_peaks(&pe, &ps);
        let cmax = ce.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pmax = pe.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut wsum = 0.0;
        for i in 0..NUM_CRIT - 1 {
            let wc = K_MAX / (K_MAX + cmax - ce[i]) * K_LOCMAX / (K_LOCMAX + cp[i] - ce[i]);
            let wp = K_MAX / (K_MAX + pmax - pe[i]) * K_LOCMAX / (K_LOCMAX + pp[i] - pe[i]);
            let w = (wc + wp) / 2.0;
            num += w * (cs[i] - ps[i]).powi(2);
            wsum += w;
        }
        d.push(num / wsum);
    }
    ensure!(!d.is_empty(), InvalidInput, "signal shorter than one 30 ms frame");
    Ok(FrameMeasure {
        frames_used: d.len(),
        value: retained_mean(d, retention),
        frames_skipped: 0,
    })
}
