//! A small synthetic benchmark: train on 20 utterances, score 5 held out.

use serde::{Deserialize, Serialize};

use super::system::InferenceMode;
use super::train::{train, FeatureSource, TrainConfig, TrainOutcome};
use crate::data::{self, UtterancePair};
use crate::encoder::{EncoderConfig, ToyEncoder};
use crate::error::Result;
use crate::fusion::Composition;
use crate::metrics::stoi;

pub const SMOKE_TRAIN: usize = 20;
pub const SMOKE_TEST: usize = 5;
pub const SMOKE_LEN: usize = 32_000;
pub const SMOKE_SNRS: [f64; 4] = [0.0, 5.0, 10.0, 15.0];

/// Training settings sized for a few minutes of CPU time.
pub fn smoke_config(composition: Composition, seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        lr: 1e-3,
        hidden: 64,
        max_steps: 400,
        // four validation utterances, so one hard 0 dB pair cannot decide early stopping
        val_fraction: 0.2,
        eval_every: Some(20),
        patience: 0,
        composition,
        seed,
        ..TrainConfig::default()
    }
}

/// The 25-pair synthetic corpus, split into training and held-out pairs.
pub fn smoke_corpus(seed: u64) -> Result<(Vec<UtterancePair>, Vec<UtterancePair>)> {
    let mut all = data::toy_corpus(SMOKE_TRAIN + SMOKE_TEST, SMOKE_LEN, &SMOKE_SNRS, seed)?;
    let test = all.split_off(SMOKE_TRAIN);
    Ok((all, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmokeReport {
    pub initial_val: f64,
    pub best_val: f64,
    pub best_step: usize,
    pub noisy_stoi: f64,
    pub enhanced_stoi: f64,
}

impl SmokeReport {
    pub fn loss_ratio(&self) -> f64 {
        self.best_val / self.initial_val
    }

    pub fn stoi_gain(&self) -> f64 {
        self.enhanced_stoi - self.noisy_stoi
    }
}

/// Train with a seeded toy encoder and score the best state on `test`.
pub fn run_smoke(
    train_pairs: &[UtterancePair],
    test_pairs: &[UtterancePair],
    cfg: &TrainConfig,
    encoder_seed: u64,
) -> Result<(SmokeReport, TrainOutcome)> {
    let enc = ToyEncoder::new(EncoderConfig::default(), encoder_seed)?;
    let out = train(train_pairs, cfg, FeatureSource::Toy(enc))?;
    let (mut noisy, mut enhanced) = (0.0, 0.0);
    for p in test_pairs {
        let y = out.best.enhance(&p.noisy, None, InferenceMode::FullSequence)?;
        noisy += stoi(&p.clean, &p.noisy)?;
        enhanced += stoi(&p.clean, &y)?;
    }
    let n = test_pairs.len() as f64;
    let report = SmokeReport {
        initial_val: out.initial_val,
        best_val: out.best_val,
        best_step: out.best_step,
        noisy_stoi: noisy / n,
        enhanced_stoi: enhanced / n,
    };
    Ok((report, out))
}
