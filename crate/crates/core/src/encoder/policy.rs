use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{init_weight, ParamGroup, Tensor};
use crate::error::{Error, Result};

pub const EXTRACTOR_PREFIX: &str = "extractor.";
pub const BLOCKS_PREFIX: &str = "blocks.";

/// Which encoder tensors train downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FreezePolicy {
    /// Nothing in the encoder trains.
    Frozen,
    /// Extractor frozen, encoder blocks train.
    Pf,
    /// Everything trains.
    Ef,
    /// Everything trains from a fresh random initialization.
    Tfs,
}

impl FreezePolicy {
    pub const ALL: [FreezePolicy; 4] = [Self::Frozen, Self::Pf, Self::Ef, Self::Tfs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Frozen => "frozen",
            Self::Pf => "pf",
            Self::Ef => "ef",
            Self::Tfs => "tfs",
        }
    }

    pub fn trains_extractor(self) -> bool {
        matches!(self, Self::Ef | Self::Tfs)
    }

    pub fn trains_blocks(self) -> bool {
        !matches!(self, Self::Frozen)
    }
}

impl fmt::Display for FreezePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FreezePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown freeze policy `{s}`")))
    }
}

/// Set trainable flags per `policy`; under [`FreezePolicy::Tfs`] every tensor is
/// also redrawn from `seed` (weights uniform in `±1/sqrt(fan_in)`, biases and
/// norm shifts zero, norm gains one).
pub fn apply_freeze_policy(mut params: ParamGroup, policy: FreezePolicy, seed: u64) -> Result<ParamGroup> {
    if let Some(bad) = params
        .names()
        .find(|n| !n.starts_with(EXTRACTOR_PREFIX) && !n.starts_with(BLOCKS_PREFIX))
    {
        return Err(Error::State(format!(
            "parameter `{bad}` belongs to neither the extractor nor the encoder blocks"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, p) in params.iter_mut() {
        p.trainable = if name.starts_with(EXTRACTOR_PREFIX) {
            policy.trains_extractor()
        } else {
            policy.trains_blocks()
        };
        p.grad = None;
        if policy == FreezePolicy::Tfs {
            p.value = reinit(name, p.value.shape(), &mut rng)?;
        }
    }
    Ok(params)
}

fn reinit(name: &str, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if name.ends_with(".gamma") {
        return Ok(Tensor::filled(shape, 1.0));
    }
    if name.ends_with(".beta") || name.ends_with(".bias") {
        return Ok(Tensor::zeros(shape));
    }
    match shape {
        [fan_in, fan_out] => Ok(init_weight(*fan_in, *fan_out, rng)),
        _ => Err(Error::State(format!("cannot reinitialize `{name}` with shape {shape:?}"))),
    }
}
