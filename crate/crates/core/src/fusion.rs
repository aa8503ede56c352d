//! Combining encoder layers into one latent sequence and pairing it with the
//! spectrogram frame axis.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::encoder::LayerStack;
use crate::error::{ensure, Error, Result};
use crate::fsutil;
use crate::matrix::Matrix;

/// Feature fed to the mask model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Composition {
    #[serde(rename = "ll")]
    Ll,
    #[serde(rename = "ws")]
    Ws,
    #[serde(rename = "ll+log1p")]
    LlLog1p,
    #[serde(rename = "ws+log1p")]
    WsLog1p,
}

impl Composition {
    pub const ALL: [Composition; 4] = [Self::Ll, Self::Ws, Self::LlLog1p, Self::WsLog1p];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ll => "ll",
            Self::Ws => "ws",
            Self::LlLog1p => "ll+log1p",
            Self::WsLog1p => "ws+log1p",
        }
    }

    pub fn weighted(self) -> bool {
        matches!(self, Self::Ws | Self::WsLog1p)
    }

    pub fn with_log1p(self) -> bool {
        matches!(self, Self::LlLog1p | Self::WsLog1p)
    }

    pub fn feature_dim(self, latent_dim: usize, bins: usize) -> usize {
        latent_dim + if self.with_log1p() { bins } else { 0 }
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown composition `{s}`")))
    }
}

/// Layer weights parameterized as a softmax over free logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub logits: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    weights: Vec<f64>,
}

impl LayerWeights {
    /// Zero logits, i.e. uniform weights.
    pub fn uniform(layers: usize) -> Self {
        Self {
            logits: vec![0.0; layers],
        }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fsutil::write_json(path, &WeightsFile { weights: self.weights() })
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Read `{"weights": [...]}`.
pub fn read_weights_json(path: &Path) -> Result<Vec<f64>> {
    Ok(fsutil::read_json::<WeightsFile>(path)?.weights)
}

/// `sum_l w[l] * Z_l`, frame by frame.
pub fn weighted_sum(stack: &LayerStack, weights: &[f64]) -> Result<Matrix> {
    ensure!(
        weights.len() == stack.num_layers(),
        Shape,
        "{} weights for {} layers",
        weights.len(),
        stack.num_layers()
    );
    let mut out = Matrix::zeros(stack.frames(), stack.dim());
    for (layer, &w) in stack.layers().iter().zip(weights) {
        for (o, &z) in out.as_mut_slice().iter_mut().zip(layer.as_slice()) {
            *o += w * z;
        }
    }
    Ok(out)
}

/// In-graph weighted sum of equally shaped `[T, D]` layers with weights
/// `softmax(logits)`, `logits` being `[L]`.
pub fn weighted_sum_graph(g: &mut Graph, layers: &[Var], logits: Var) -> Result<Var> {
    ensure!(!layers.is_empty(), Shape, "no layers to combine");
    let (t, d) = g.shape(layers[0]);
    let (_, l) = g.shape(logits);
    ensure!(l == layers.len(), Shape, "{l} logits for {} layers", layers.len());
    let flat = layers
        .iter()
        .map(|&v| g.reshape(v, 1, t * d))
        .collect::<Result<Vec<_>>>()?;
    let stacked = g.concat(&flat, 0)?;
    let w = g.softmax(logits)?;
    let mixed = g.matmul(w, stacked)?;
    g.reshape(mixed, t, d)
}

/// Row indices for head-anchored duplication: latent frame `t` covers
/// spectrogram frames `2t` and `2t + 1`; excess rows are dropped and a
/// deficit is filled by repeating the last latent frame.
pub fn duplication_indices(latent_frames: usize, spec_frames: usize) -> Vec<usize> {
    (0..spec_frames)
        .map(|f| (f / 2).min(latent_frames.saturating_sub(1)))
        .collect()
}

pub fn check_stride(latent_stride: usize, hop: usize) -> Result<()> {
    if latent_stride != 2 * hop {
        return Err(Error::UnsupportedStride {
            latent: latent_stride,
            hop,
        });
    }
    Ok(())
}

/// Repeat every latent frame twice to reach the spectrogram frame rate.
pub fn align_duplicate(
    latent: &Matrix,
    spec_frames: usize,
    latent_stride: usize,
    hop: usize,
) -> Result<Matrix> {
    check_stride(latent_stride, hop)?;
    ensure!(latent.rows() > 0, Shape, "empty latent sequence");
    let idx = duplication_indices(latent.rows(), spec_frames);
    let d = latent.cols();
    let mut out = Matrix::zeros(spec_frames, d);
    for (f, &t) in idx.iter().enumerate() {
        out.row_mut(f).copy_from_slice(latent.row(t));
    }
    Ok(out)
}

/// Per-frame `[latent | log1p]`.
pub fn concat_cross_domain(latent: &Matrix, log1p_mag: &Matrix) -> Result<Matrix> {
    ensure!(
        latent.rows() == log1p_mag.rows(),
        Shape,
        "latent has {} frames, spectrogram {}",
        latent.rows(),
        log1p_mag.rows()
    );
    let (d, b) = (latent.cols(), log1p_mag.cols());
    let mut out = Matrix::zeros(latent.rows(), d + b);
    for t in 0..latent.rows() {
        let row = out.row_mut(t);
        row[..d].copy_from_slice(latent.row(t));
        row[d..].copy_from_slice(log1p_mag.row(t));
    }
    Ok(out)
}
