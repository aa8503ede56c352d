//! Rational-ratio windowed-sinc resampler.
//!
//! The ratio `target / source` is reduced to `up / down`; output sample `n`
//! sits at input time `n * down / up`, so only `up` distinct fractional
//! offsets occur and each gets its own 64-tap Kaiser-windowed sinc phase.

use std::f64::consts::PI;

use super::Waveform;
use crate::error::{ensure, Result};

const TAPS: usize = 64;
const KAISER_BETA: f64 = 8.6;
/// Phase tables larger than this are evaluated on the fly.
const MAX_TABLE_PHASES: usize = 1024;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Taps for one fractional offset, normalized to unit DC gain.
fn phase_taps(frac: f64, cutoff: f64) -> [f64; TAPS] {
    let half = (TAPS / 2) as f64;
    let norm = bessel_i0(KAISER_BETA);
    let mut taps = [0.0; TAPS];
    for (k, tap) in taps.iter_mut().enumerate() {
        // distance from the output instant to input sample j0 - (TAPS/2 - 1) + k
        let tau = half - 1.0 + frac - k as f64;
        let u = tau / half;
        let w = if u.abs() >= 1.0 {
            0.0
        } else {
            bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / norm
        };
        *tap = cutoff * sinc(cutoff * tau) * w;
    }
    let sum: f64 = taps.iter().sum();
    if sum.abs() > 0.0 {
        taps.iter_mut().for_each(|t| *t /= sum);
    }
    taps
}

pub fn resample(x: &Waveform, target_rate: u32) -> Result<Waveform> {
    ensure!(target_rate > 0, InvalidInput, "target rate must be positive");
    ensure!(!x.is_empty(), InvalidInput, "empty signal");
    let source_rate = x.sample_rate();
    if source_rate == target_rate {
        return Ok(x.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = (target_rate as u64 / g) as usize;
    let down = (source_rate as u64 / g) as usize;
    let cutoff = (up as f64 / down as f64).min(1.0);

    let input = x.samples();
    let out_len = ((input.len() as f64) * up as f64 / down as f64).round() as usize;
    let table: Option<Vec<[f64; TAPS]>> = (up <= MAX_TABLE_PHASES)
        .then(|| (0..up).map(|p| phase_taps(p as f64 / up as f64, cutoff)).collect());

    let first_offset = TAPS as isize / 2 - 1;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n as u64 * down as u64;
        let base = (pos / up as u64) as isize;
        let phase = (pos % up as u64) as usize;
        let computed;
        let taps = match &table {
            Some(t) => &t[phase],
            None => {
                computed = phase_taps(phase as f64 / up as f64, cutoff);
                &computed
            }
        };
        let start = base - first_offset;
        let mut acc = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            let j = start + k as isize;
            if j >= 0 && (j as usize) < input.len() {
                acc += h * input[j as usize];
            }
        }
        out.push(acc);
    }
    Waveform::new(out, target_rate)
}
