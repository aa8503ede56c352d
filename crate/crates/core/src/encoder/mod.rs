//! Per-layer latent stacks, the toy SSL encoder, freeze policies and `.ssle` files.

mod policy;
mod ssle;
mod toy;

pub use policy::{apply_freeze_policy, FreezePolicy, EXTRACTOR_PREFIX, BLOCKS_PREFIX};
pub use ssle::{decode_embedding, encode_embedding, read_embedding_dir, read_embedding_file, write_embedding_file};
pub use toy::{EncoderConfig, ToyEncoder};

use crate::error::{ensure, Result};
use crate::matrix::Matrix;

/// Samples per latent frame of the toy encoder (and of the common SSL models at 16 kHz).
pub const LATENT_STRIDE: usize = 320;

/// Hidden states of every layer for one utterance, each `frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Matrix>,
    pub stride_samples: usize,
    pub sample_rate: u32,
    /// Layer 0 is the convolutional front-end output.
    pub layer0_is_extractor: bool,
}

impl LayerStack {
    pub fn new(layers: Vec<Matrix>, stride_samples: usize, sample_rate: u32) -> Result<Self> {
        ensure!(!layers.is_empty(), Shape, "a layer stack needs at least one layer");
        let shape = layers[0].shape();
        ensure!(shape.0 > 0 && shape.1 > 0, Shape, "empty layer {shape:?}");
        for (i, l) in layers.iter().enumerate() {
            ensure!(
                l.shape() == shape,
                Shape,
                "layer {i} is {:?}, layer 0 is {shape:?}",
                l.shape()
            );
            ensure!(l.is_finite(), Numerical, "layer {i} has non-finite entries");
        }
        ensure!(stride_samples > 0 && sample_rate > 0, InvalidInput, "stride and rate must be positive");
        Ok(Self {
            layers,
            stride_samples,
            sample_rate,
            layer0_is_extractor: true,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn frames(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn layer(&self, l: usize) -> &Matrix {
        &self.layers[l]
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn last(&self) -> &Matrix {
        self.layers.last().expect("non-empty by construction")
    }

    pub fn into_layers(self) -> Vec<Matrix> {
        self.layers
    }

    /// Keep the first `frames` frames of every layer.
    pub fn truncated(&self, frames: usize) -> Result<Self> {
        ensure!(
            frames > 0 && frames <= self.frames(),
            InvalidInput,
            "cannot truncate {} frames to {frames}",
            self.frames()
        );
        let layers = self.layers.iter().map(|l| l.slice_rows(0, frames)).collect();
        Ok(Self { layers, ..self.clone() })
    }
}
