use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{MaskConfig, MaskModel};
use crate::autodiff::{self, Adam, AdamConfig, Bindings, Gradients, Graph, ParamGroup, Tensor, Var};
use crate::dsp::{self, Stft, Waveform, HOP};
use crate::encoder::{FreezePolicy, LayerStack, ToyEncoder, LATENT_STRIDE};
use crate::error::{ensure, Error, Result};
use crate::fsutil;
use crate::fusion::{self, Composition, LayerWeights};
use crate::matrix::Matrix;

pub const LOGITS: &str = "fusion.logits";
const ENCODER_PREFIX: &str = "encoder.";
pub const CHECKPOINT_FILE: &str = "model.senp";
pub const SIDECAR_FILE: &str = "model.json";

/// How full-length utterances are fed to the mask model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// One pass over the whole utterance.
    #[default]
    FullSequence,
    /// Non-overlapping windows of the training crop length, the last one
    /// shifted left to end at the utterance end; masks are stitched by frame index.
    Tiled { window_samples: usize },
}

/// Latent source, mask model and layer weights trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct Enhancer {
    pub composition: Composition,
    pub policy: FreezePolicy,
    /// `None` means features come from precomputed embedding files.
    pub encoder: Option<ToyEncoder>,
    /// Holds [`LOGITS`], one per latent layer.
    pub fusion: ParamGroup,
    pub mask: MaskModel,
    pub latent_layers: usize,
    pub latent_dim: usize,
}

/// Separate Adam state for the encoder, the layer weights and the mask model.
pub(crate) struct Optimizers {
    encoder: Adam,
    fusion: Adam,
    mask: Adam,
}

impl Optimizers {
    pub(crate) fn new(config: AdamConfig) -> Self {
        Self {
            encoder: Adam::new(config),
            fusion: Adam::new(config),
            mask: Adam::new(config),
        }
    }
}

pub(crate) struct EnhancerBindings {
    encoder: Option<Bindings>,
    fusion: Bindings,
    mask: Bindings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub composition: Composition,
    pub input_dim: usize,
    pub policy: FreezePolicy,
    pub layer_weights: Vec<f64>,
    pub latent_layers: usize,
    pub latent_dim: usize,
    /// Whether the checkpoint carries a toy encoder.
    pub encoder: bool,
}

fn fusion_group(layers: usize, composition: Composition) -> Result<ParamGroup> {
    let mut g = ParamGroup::new();
    // Under LL the logits never enter the graph.
    g.insert(LOGITS, Tensor::zeros(&[layers]), composition.weighted())?;
    Ok(g)
}

impl Enhancer {
    /// Toy-encoder features; `policy` is applied to the encoder (TFS redraws it from `seed`).
    pub fn with_encoder(
        composition: Composition,
        policy: FreezePolicy,
        mut encoder: ToyEncoder,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        encoder.apply_policy(policy, seed ^ 0x7F5)?;
        let (layers, dim) = (encoder.config.num_layers(), encoder.config.dim);
        let mask = MaskModel::new(
            MaskConfig {
                hidden,
                ..MaskConfig::new(composition.feature_dim(dim, dsp::FFT_BINS))
            },
            seed,
        )?;
        Ok(Self {
            composition,
            policy,
            encoder: Some(encoder),
            fusion: fusion_group(layers, composition)?,
            mask,
            latent_layers: layers,
            latent_dim: dim,
        })
    }

    /// Features from external `layers x dim` embeddings, which are never trained.
    pub fn with_embeddings(composition: Composition, layers: usize, dim: usize, hidden: usize, seed: u64) -> Result<Self> {
        ensure!(layers > 0 && dim > 0, InvalidInput, "embedding layout must be non-empty");
        let mask = MaskModel::new(
            MaskConfig {
                hidden,
                ..MaskConfig::new(composition.feature_dim(dim, dsp::FFT_BINS))
            },
            seed,
        )?;
        Ok(Self {
            composition,
            policy: FreezePolicy::Frozen,
            encoder: None,
            fusion: fusion_group(layers, composition)?,
            mask,
            latent_layers: layers,
            latent_dim: dim,
        })
    }

    pub fn layer_weights(&self) -> Result<LayerWeights> {
        Ok(LayerWeights {
            logits: self.fusion.value(LOGITS)?.data().to_vec(),
        })
    }

    pub(crate) fn bind(&self, g: &mut Graph) -> Result<EnhancerBindings> {
        Ok(EnhancerBindings {
            encoder: self.encoder.as_ref().map(|e| e.params.bind(g)).transpose()?,
            fusion: self.fusion.bind(g)?,
            mask: self.mask.params.bind(g)?,
        })
    }

    /// Bind everything as constants.
    pub(crate) fn bind_frozen(&self, g: &mut Graph) -> Result<EnhancerBindings> {
        let mut copy = self.clone();
        if let Some(e) = &mut copy.encoder {
            e.params.set_all_trainable(false);
        }
        copy.fusion.set_all_trainable(false);
        copy.mask.params.set_all_trainable(false);
        copy.bind(g)
    }

    pub(crate) fn zero_grad(&mut self) {
        if let Some(e) = &mut self.encoder {
            e.params.zero_grad();
        }
        self.fusion.zero_grad();
        self.mask.params.zero_grad();
    }

    pub(crate) fn accumulate(&mut self, b: &EnhancerBindings, grads: &Gradients) -> Result<()> {
        if let (Some(e), Some(eb)) = (&mut self.encoder, &b.encoder) {
            e.params.accumulate_grads(eb, grads)?;
        }
        self.fusion.accumulate_grads(&b.fusion, grads)?;
        self.mask.params.accumulate_grads(&b.mask, grads)
    }

    /// One Adam update per parameter group; groups with nothing trainable are skipped.
    pub(crate) fn step(&mut self, opt: &mut Optimizers) -> Result<()> {
        let any = |g: &ParamGroup| g.iter().any(|(_, p)| p.trainable);
        if let Some(e) = &mut self.encoder {
            if any(&e.params) {
                opt.encoder.step(&mut e.params)?;
            }
        }
        if any(&self.fusion) {
            opt.fusion.step(&mut self.fusion)?;
        }
        opt.mask.step(&mut self.mask.params)
    }

    /// Check an embedding stack against this model before use.
    pub fn check_embedding(&self, stack: &LayerStack) -> Result<()> {
        fusion::check_stride(stack.stride_samples, HOP)?;
        ensure!(
            stack.num_layers() == self.latent_layers && stack.dim() == self.latent_dim,
            State,
            "embedding is {} layers x {} dims, model was trained on {} x {}",
            stack.num_layers(),
            stack.dim(),
            self.latent_layers,
            self.latent_dim
        );
        Ok(())
    }

    /// Fused feature `[frames, input_dim]` for a waveform segment whose
    /// spectrogram is `log1p`. `embedding` rows are read from `latent_offset`.
    pub(crate) fn features_graph(
        &self,
        g: &mut Graph,
        b: &EnhancerBindings,
        samples: &[f64],
        log1p: &Matrix,
        embedding: Option<&LayerStack>,
        latent_offset: usize,
    ) -> Result<Var> {
        let frames = log1p.rows();
        let latent_frames = frames.div_ceil(2);
        let layers: Vec<Var> = match (&self.encoder, b.encoder.as_ref(), embedding) {
            (Some(enc), Some(eb), None) => enc.forward_graph(g, eb, samples)?,
            (None, _, Some(stack)) => {
                self.check_embedding(stack)?;
                let last = stack.frames() - 1;
                let rows: Vec<usize> = (0..latent_frames).map(|t| (latent_offset + t).min(last)).collect();
                stack
                    .layers()
                    .iter()
                    .map(|l| {
                        let data = rows.iter().flat_map(|&r| l.row(r).iter().copied()).collect();
                        g.constant(Tensor::new(vec![rows.len(), stack.dim()], data)?)
                    })
                    .collect::<Result<_>>()?
            }
            (Some(_), _, Some(_)) => {
                return Err(Error::State("model has its own encoder; embeddings were also given".into()))
            }
            _ => return Err(Error::State("model expects precomputed embeddings".into())),
        };
        let latent = if self.composition.weighted() {
            let logits = b.fusion.var(LOGITS)?;
            fusion::weighted_sum_graph(g, &layers, logits)?
        } else {
            *layers.last().expect("non-empty")
        };
        let lt = g.shape(latent).0;
        let aligned = g.gather_rows(latent, &fusion::duplication_indices(lt, frames))?;
        if !self.composition.with_log1p() {
            return Ok(aligned);
        }
        let spec = g.constant(Tensor::from(log1p))?;
        g.concat(&[aligned, spec], 1)
    }

    pub(crate) fn mask_graph(&self, g: &mut Graph, b: &EnhancerBindings, feature: Var, batch: usize) -> Result<Var> {
        self.mask.forward_graph(g, &b.mask, feature, batch)
    }

    fn mask_segment(&self, samples: &[f64], log1p: &Matrix, embedding: Option<&LayerStack>, latent_offset: usize) -> Result<Matrix> {
        let mut g = Graph::new();
        let b = self.bind_frozen(&mut g)?;
        let f = self.features_graph(&mut g, &b, samples, log1p, embedding, latent_offset)?;
        let m = self.mask_graph(&mut g, &b, f, 1)?;
        g.value(m).to_matrix()
    }

    /// Predicted mask for `noisy`, one row per STFT frame of the padded input.
    pub fn mask_for(&self, noisy: &Waveform, embedding: Option<&LayerStack>, mode: InferenceMode) -> Result<Matrix> {
        let x = pad_for_inference(noisy);
        let spec = dsp::stft(&x, dsp::WINDOW_LEN, HOP)?;
        self.mask_padded(&x, &spec.log1p_mag, embedding, mode)
    }

    fn mask_padded(&self, x: &Waveform, log1p: &Matrix, embedding: Option<&LayerStack>, mode: InferenceMode) -> Result<Matrix> {
        let window = match mode {
            InferenceMode::FullSequence => return self.mask_segment(x.samples(), log1p, embedding, 0),
            InferenceMode::Tiled { window_samples } => window_samples,
        };
        ensure!(
            window > 0 && window % LATENT_STRIDE == 0,
            InvalidInput,
            "tile length {window} must be a positive multiple of {LATENT_STRIDE}"
        );
        if x.len() <= window {
            return self.mask_segment(x.samples(), log1p, embedding, 0);
        }
        let mut starts: Vec<usize> = (0..x.len() / window).map(|k| k * window).collect();
        if x.len() % window != 0 {
            starts.push(x.len() - window);
        }
        let frames = log1p.rows();
        let mut out = Matrix::zeros(frames, log1p.cols());
        let mut filled = 0;
        for start in starts {
            let seg = x.segment(start, window);
            let spec = dsp::stft(&seg, dsp::WINDOW_LEN, HOP)?;
            let m = self.mask_segment(seg.samples(), &spec.log1p_mag, embedding, start / LATENT_STRIDE)?;
            let first = start / HOP;
            for j in 0..m.rows() {
                let f = first + j;
                if f >= filled && f < frames {
                    out.row_mut(f).copy_from_slice(m.row(j));
                }
            }
            filled = (first + m.rows()).min(frames);
        }
        Ok(out)
    }

    /// Enhanced waveform: `expm1(mask * log1p|X|)` with the noisy phase, same length as `noisy`.
    pub fn enhance(&self, noisy: &Waveform, embedding: Option<&LayerStack>, mode: InferenceMode) -> Result<Waveform> {
        dsp::require_working_rate(noisy)?;
        let x = pad_for_inference(noisy);
        let spec = dsp::stft(&x, dsp::WINDOW_LEN, HOP)?;
        let mask = self.mask_padded(&x, &spec.log1p_mag, embedding, mode)?;
        let out = apply_mask(&spec, &mask, x.len())?;
        Ok(out.segment(0, noisy.len()))
    }

    pub fn sidecar(&self) -> Result<Sidecar> {
        Ok(Sidecar {
            composition: self.composition,
            input_dim: self.mask.config.input_dim,
            policy: self.policy,
            layer_weights: self.layer_weights()?.weights(),
            latent_layers: self.latent_layers,
            latent_dim: self.latent_dim,
            encoder: self.encoder.is_some(),
        })
    }

    /// Write `model.senp` and `model.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut all: Vec<(String, &Tensor)> = Vec::new();
        if let Some(e) = &self.encoder {
            all.extend(e.params.iter().map(|(n, p)| (format!("{ENCODER_PREFIX}{n}"), &p.value)));
        }
        all.extend(self.fusion.iter().map(|(n, p)| (n.to_string(), &p.value)));
        all.extend(self.mask.params.iter().map(|(n, p)| (n.to_string(), &p.value)));
        let bytes = autodiff::encode_params(all.iter().map(|(n, t)| (n.as_str(), *t)));
        fsutil::write_atomic(&dir.join(CHECKPOINT_FILE), &bytes)?;
        fsutil::write_json(&dir.join(SIDECAR_FILE), &self.sidecar()?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let side: Sidecar = fsutil::read_json(&dir.join(SIDECAR_FILE))?;
        let records = autodiff::read_params(&dir.join(CHECKPOINT_FILE))?;
        let (mut enc, mut fus, mut mask) = (ParamGroup::new(), ParamGroup::new(), ParamGroup::new());
        for (name, t) in records {
            if let Some(rest) = name.strip_prefix(ENCODER_PREFIX) {
                enc.insert(rest, t, false)?;
            } else if name == LOGITS {
                fus.insert(name, t, false)?;
            } else if name.starts_with("mask.") {
                mask.insert(name, t, false)?;
            } else {
                return Err(Error::Format(format!("unexpected tensor `{name}` in checkpoint")));
            }
        }
        let mask = MaskModel::from_params(mask)?;
        let encoder = if side.encoder {
            ensure!(!enc.is_empty(), State, "sidecar declares an encoder but the checkpoint has none");
            Some(ToyEncoder::from_params(enc)?)
        } else {
            ensure!(enc.is_empty(), State, "checkpoint has encoder tensors the sidecar does not declare");
            None
        };
        let logits = fus.value(LOGITS)?;
        ensure!(
            logits.numel() == side.latent_layers,
            State,
            "{} layer logits for {} declared layers",
            logits.numel(),
            side.latent_layers
        );
        ensure!(
            mask.config.input_dim == side.input_dim
                && side.input_dim == side.composition.feature_dim(side.latent_dim, dsp::FFT_BINS),
            State,
            "mask input width {} does not fit composition {} over {} latent dims",
            mask.config.input_dim,
            side.composition,
            side.latent_dim
        );
        if let Some(e) = &encoder {
            ensure!(
                e.config.num_layers() == side.latent_layers && e.config.dim == side.latent_dim,
                State,
                "encoder shape does not match the sidecar"
            );
        }
        Ok(Self {
            composition: side.composition,
            policy: side.policy,
            encoder,
            fusion: fus,
            mask,
            latent_layers: side.latent_layers,
            latent_dim: side.latent_dim,
        })
    }
}

/// Zero-pad to a whole number of latent frames (at least one).
pub fn pad_for_inference(x: &Waveform) -> Waveform {
    let len = x.len().max(1).div_ceil(LATENT_STRIDE) * LATENT_STRIDE;
    x.segment(0, len)
}

/// `expm1(mask * log1p)` with the phase of `spec`, resynthesized to `out_len` samples.
pub fn apply_mask(spec: &dsp::SpectrogramPair, mask: &Matrix, out_len: usize) -> Result<Waveform> {
    ensure!(
        mask.shape() == spec.log1p_mag.shape(),
        Shape,
        "mask {:?} vs spectrogram {:?}",
        mask.shape(),
        spec.log1p_mag.shape()
    );
    let mut mag = Matrix::zeros(mask.rows(), mask.cols());
    for ((o, &m), &l) in mag
        .as_mut_slice()
        .iter_mut()
        .zip(mask.as_slice())
        .zip(spec.log1p_mag.as_slice())
    {
        *o = (m * l).exp_m1();
    }
    Stft::new(spec.window_len, spec.frame_hop)?.inverse(&mag, &spec.phase, out_len)
}
