use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_freeze_policy, FreezePolicy, LayerStack, LATENT_STRIDE};
use crate::autodiff::{init_bias, init_weight, Bindings, Graph, ParamGroup, Tensor, Var};
use crate::dsp::{self, Waveform};
use crate::error::{ensure, Result};
use crate::matrix::Matrix;
use crate::nn;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Latent dimension shared by every layer.
    pub dim: usize,
    pub blocks: usize,
    /// Extractor convolution channels.
    pub channels: usize,
    pub ff_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            blocks: 4,
            channels: 64,
            ff_dim: 128,
        }
    }
}

impl EncoderConfig {
    pub fn num_layers(&self) -> usize {
        self.blocks + 1
    }

    /// Recover the configuration from parameter shapes.
    pub fn infer(params: &ParamGroup) -> Result<Self> {
        let proj = params.value("extractor.proj.weight")?;
        let conv1 = params.value("extractor.conv1.weight")?;
        let mut blocks = 0;
        while params.get(&format!("blocks.{blocks}.ln1.gamma")).is_some() {
            blocks += 1;
        }
        let ff_dim = if blocks > 0 {
            params.value("blocks.0.ff1.weight")?.shape()[1]
        } else {
            2 * proj.shape()[1]
        };
        Ok(Self {
            dim: proj.shape()[1],
            blocks,
            channels: conv1.shape()[1],
            ff_dim,
        })
    }
}

/// Stand-in SSL encoder: a strided convolutional extractor (net stride 320
/// samples) followed by pre-norm self-attention blocks.
///
/// Extractor: conv k=10 s=5 to `channels`, tanh; conv k=8 s=4, tanh; conv
/// k=16 s=16 to `dim`. Each stage right-pads so frame counts divide exactly,
/// giving `floor(len / 320)` latent frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub config: EncoderConfig,
    pub params: ParamGroup,
}

const STAGES: [(&str, usize, usize, usize); 3] = [
    ("conv1", 10, 5, 5),
    ("conv2", 8, 4, 4),
    ("proj", 16, 16, 0),
];

impl ToyEncoder {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        ensure!(
            config.dim > 0 && config.channels > 0 && config.ff_dim > 0,
            InvalidInput,
            "encoder sizes must be positive: {config:?}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamGroup::new();
        let (c, d) = (config.channels, config.dim);
        for (name, kernel, _, _) in STAGES {
            let (c_in, c_out) = match name {
                "conv1" => (1, c),
                "conv2" => (c, c),
                _ => (c, d),
            };
            params.insert(
                format!("extractor.{name}.weight"),
                init_weight(kernel * c_in, c_out, &mut rng),
                true,
            )?;
            params.insert(format!("extractor.{name}.bias"), init_bias(c_out), true)?;
        }
        for i in 0..config.blocks {
            nn::add_attention_block(&mut params, &format!("blocks.{i}"), d, config.ff_dim, &mut rng)?;
        }
        Ok(Self { config, params })
    }

    pub fn from_params(params: ParamGroup) -> Result<Self> {
        let config = EncoderConfig::infer(&params)?;
        Ok(Self { config, params })
    }

    pub fn apply_policy(&mut self, policy: FreezePolicy, seed: u64) -> Result<()> {
        self.params = apply_freeze_policy(std::mem::take(&mut self.params), policy, seed)?;
        Ok(())
    }

    /// Build the forward pass on `g`, returning one `[T, dim]` node per layer.
    pub fn forward_graph(&self, g: &mut Graph, p: &Bindings, samples: &[f64]) -> Result<Vec<Var>> {
        ensure!(
            samples.len() >= LATENT_STRIDE,
            InvalidInput,
            "encoder needs at least {LATENT_STRIDE} samples, got {}",
            samples.len()
        );
        let mut h = g.constant(Tensor::new(vec![samples.len(), 1], samples.to_vec())?)?;
        for (name, kernel, stride, pad) in STAGES {
            let w = p.var(&format!("extractor.{name}.weight"))?;
            let b = p.var(&format!("extractor.{name}.bias"))?;
            let conv = g.conv1d(h, w, kernel, stride, pad)?;
            h = g.add_bias(conv, b)?;
            if name != "proj" {
                h = g.tanh(h)?;
            }
        }
        let mut layers = vec![h];
        for i in 0..self.config.blocks {
            h = nn::attention_block(g, p, &format!("blocks.{i}"), h)?;
            layers.push(h);
        }
        Ok(layers)
    }

    pub fn forward(&self, x: &Waveform) -> Result<LayerStack> {
        dsp::require_working_rate(x)?;
        let mut g = Graph::new();
        let frozen = {
            let mut p = self.params.clone();
            p.set_all_trainable(false);
            p
        };
        let b = frozen.bind(&mut g)?;
        let layers = self.forward_graph(&mut g, &b, x.samples())?;
        let mats = layers
            .into_iter()
            .map(|v| g.value(v).to_matrix())
            .collect::<Result<Vec<Matrix>>>()?;
        LayerStack::new(mats, LATENT_STRIDE, x.sample_rate())
    }
}
