//! Layer-wise clean/noisy distance curves and their correlation with fusion weights.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::LayerStack;
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::{fsutil, threads};

/// Floor applied to per-dimension standard deviations before z-scoring.
pub const MIN_STD: f64 = 1e-8;

/// Per-dimension z-scoring over the frames of `m` (population statistics).
pub fn zscore(m: &Matrix) -> Matrix {
    let (t, d) = (m.rows(), m.cols());
    let mut out = m.clone();
    for j in 0..d {
        let mean = (0..t).map(|i| m.row(i)[j]).sum::<f64>() / t as f64;
        let var = (0..t).map(|i| (m.row(i)[j] - mean).powi(2)).sum::<f64>() / t as f64;
        let sd = var.sqrt().max(MIN_STD);
        for i in 0..t {
            out.row_mut(i)[j] = (m.row(i)[j] - mean) / sd;
        }
    }
    out
}

fn check_pair(clean: &LayerStack, noisy: &LayerStack) -> Result<()> {
    ensure!(
        clean.num_layers() == noisy.num_layers() && clean.frames() == noisy.frames() && clean.dim() == noisy.dim(),
        Shape,
        "clean stack is {}x{}x{} but noisy is {}x{}x{}",
        clean.num_layers(),
        clean.frames(),
        clean.dim(),
        noisy.num_layers(),
        noisy.frames(),
        noisy.dim()
    );
    ensure!(clean.frames() >= 2, InvalidInput, "need at least 2 frames, got {}", clean.frames());
    Ok(())
}

fn layer_distance(c: &Matrix, n: &Matrix) -> f64 {
    let (zc, zn) = (zscore(c), zscore(n));
    let total: f64 = zc.as_slice().iter().zip(zn.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    total / c.rows() as f64
}

/// Mean over frames of the squared distance between z-scored clean and noisy frames at `layer`.
pub fn cn_distance(clean: &LayerStack, noisy: &LayerStack, layer: usize) -> Result<f64> {
    check_pair(clean, noisy)?;
    ensure!(
        layer < clean.num_layers(),
        InvalidInput,
        "layer {layer} out of range for {} layers",
        clean.num_layers()
    );
    Ok(layer_distance(clean.layer(layer), noisy.layer(layer)))
}

/// [`cn_distance`] at every layer.
pub fn cn_curve(clean: &LayerStack, noisy: &LayerStack) -> Result<Vec<f64>> {
    check_pair(clean, noisy)?;
    Ok(clean
        .layers()
        .iter()
        .zip(noisy.layers())
        .map(|(c, n)| layer_distance(c, n))
        .collect())
}

/// Min-max scaling to `[0, 1]`. A constant input maps to zeros and returns `false`.
pub fn minmax(v: &[f64]) -> (Vec<f64>, bool) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return (vec![0.0; v.len()], false);
    }
    (v.iter().map(|x| (x - lo) / (hi - lo)).collect(), true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnCurve {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub n_samples: usize,
    /// Set when `raw` is constant and `normalized` is all zeros.
    pub constant: bool,
}

impl CnCurve {
    pub fn from_raw(raw: Vec<f64>, n_samples: usize) -> Self {
        let (normalized, ok) = minmax(&raw);
        Self {
            raw,
            normalized,
            n_samples,
            constant: !ok,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.raw.len()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveOptions {
    /// Min-max normalize each sample's curve before averaging.
    pub per_sample_normalization: bool,
}

/// Average the per-sample curves in input order, then min-max normalize.
pub fn average_curve(samples: &[(LayerStack, LayerStack)], opts: CurveOptions) -> Result<CnCurve> {
    ensure!(!samples.is_empty(), InvalidInput, "no samples to average");
    let layers = samples[0].0.num_layers();
    for (c, n) in samples {
        ensure!(
            c.num_layers() == layers && n.num_layers() == layers,
            Shape,
            "inconsistent layer counts: expected {layers}, got {} and {}",
            c.num_layers(),
            n.num_layers()
        );
    }
    let curves = threads::install(|| {
        samples
            .par_iter()
            .map(|(c, n)| {
                let curve = cn_curve(c, n)?;
                Ok(if opts.per_sample_normalization { minmax(&curve).0 } else { curve })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut raw = vec![0.0; layers];
    for curve in &curves {
        raw.iter_mut().zip(curve).for_each(|(r, v)| *r += v);
    }
    raw.iter_mut().for_each(|r| *r /= curves.len() as f64);
    Ok(CnCurve::from_raw(raw, curves.len()))
}

/// Seeded choice of up to `count` ids, returned in sorted order.
pub fn sample_ids(ids: &[String], count: usize, seed: u64) -> Vec<String> {
    let mut pool: Vec<String> = ids.to_vec();
    pool.sort();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pool.truncate(count);
    pool.sort();
    pool
}

/// Sample Pearson correlation over the first `len - drop_last` entries.
pub fn pearson(a: &[f64], b: &[f64], drop_last: usize) -> Result<f64> {
    ensure!(a.len() == b.len(), Shape, "lengths differ: {} vs {}", a.len(), b.len());
    ensure!(
        a.len() >= drop_last + 2,
        InvalidInput,
        "{} entries leave fewer than 2 after dropping {drop_last}",
        a.len()
    );
    let n = a.len() - drop_last;
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnSummary {
    /// Between the normalized distances and the layer weights; absent without weights.
    pub pearson: Option<f64>,
    /// Why `pearson` is absent although weights were given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_undefined: Option<String>,
    pub drop_last: usize,
    pub n_samples: usize,
}

/// Header `layer,raw_distance,normalized_distance,weight`; `weight` is empty without weights.
pub fn curve_csv(curve: &CnCurve, weights: Option<&[f64]>) -> Result<Vec<u8>> {
    if let Some(w) = weights {
        ensure!(
            w.len() == curve.num_layers(),
            Shape,
            "{} weights for {} layers",
            w.len(),
            curve.num_layers()
        );
    }
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["layer", "raw_distance", "normalized_distance", "weight"])?;
    for l in 0..curve.num_layers() {
        out.write_record([
            l.to_string(),
            curve.raw[l].to_string(),
            curve.normalized[l].to_string(),
            weights.map(|w| w[l].to_string()).unwrap_or_default(),
        ])?;
    }
    out.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

/// Write the curve CSV and its JSON summary; returns the summary.
///
/// A constant curve or constant weights leave `pearson` empty and set
/// `pearson_undefined` rather than failing, so the curve is still written.
pub fn write_curve(
    curve: &CnCurve,
    weights: Option<&[f64]>,
    drop_last: usize,
    csv_path: &Path,
    json_path: &Path,
) -> Result<CnSummary> {
    let (pearson, pearson_undefined) = match weights.map(|w| pearson(&curve.normalized, w, drop_last)) {
        None => (None, None),
        Some(Ok(r)) => (Some(r), None),
        Some(Err(Error::UndefinedCorrelation(why))) => (None, Some(why)),
        Some(Err(e)) => return Err(e),
    };
    fsutil::write_atomic(csv_path, &curve_csv(curve, weights)?)?;
    let summary = CnSummary {
        pearson,
        pearson_undefined,
        drop_last,
        n_samples: curve.n_samples,
    };
    fsutil::write_json(json_path, &summary)?;
    Ok(summary)
}
