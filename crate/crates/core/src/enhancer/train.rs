use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::sa_loss_graph;
use super::system::{Enhancer, Optimizers};
use crate::autodiff::{AdamConfig, Graph, Tensor};
use crate::data::{self, SplitPlan, UtterancePair, CROP_SAMPLES};
use crate::dsp::{self, HOP, WINDOW_LEN};
use crate::encoder::{EncoderConfig, FreezePolicy, LayerStack, ToyEncoder, LATENT_STRIDE};
use crate::error::{ensure, Error, Result};
use crate::fsutil;
use crate::fusion::Composition;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub crop_samples: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_steps: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub policy: FreezePolicy,
    pub composition: Composition,
    /// BLSTM width per direction.
    pub hidden: usize,
    /// Evaluations without improvement before stopping; 0 never stops early.
    pub patience: usize,
    /// Steps between validation passes; one epoch when unset.
    pub eval_every: Option<usize>,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            crop_samples: CROP_SAMPLES,
            batch_size: 8,
            lr: 1e-4,
            max_steps: 2000,
            val_fraction: 0.05,
            seed: 0,
            policy: FreezePolicy::Frozen,
            composition: Composition::WsLog1p,
            hidden: 256,
            patience: 5,
            eval_every: None,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.crop_samples > 0 && self.crop_samples % LATENT_STRIDE == 0,
            InvalidInput,
            "crop_samples must be a positive multiple of {LATENT_STRIDE}, got {}",
            self.crop_samples
        );
        ensure!(self.batch_size > 0, InvalidInput, "batch_size must be positive");
        ensure!(self.lr > 0.0 && self.lr.is_finite(), InvalidInput, "lr must be positive");
        ensure!(
            self.val_fraction > 0.0 && self.val_fraction < 1.0,
            InvalidInput,
            "val_fraction must be in (0, 1)"
        );
        ensure!(self.hidden > 0, InvalidInput, "hidden must be positive");
        ensure!(self.eval_every != Some(0), InvalidInput, "eval_every must be positive");
        Ok(())
    }
}

/// Where latent layers come from during training.
#[derive(Debug, Clone)]
pub enum FeatureSource<'a> {
    /// A toy encoder with these starting weights; trained per the policy.
    Toy(ToyEncoder),
    /// Precomputed stacks of the noisy utterances, keyed by utterance id.
    Embeddings(&'a BTreeMap<String, LayerStack>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub split: String,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// State before the first update.
    pub initial: Enhancer,
    /// State with the lowest validation loss.
    pub best: Enhancer,
    /// State after the last update.
    pub last: Enhancer,
    pub initial_val: f64,
    pub best_val: f64,
    pub best_step: usize,
    pub steps: usize,
    pub log: Vec<LogRow>,
    pub split: SplitPlan,
}

struct Example {
    samples: Vec<f64>,
    noisy_log1p: Matrix,
    clean_log1p: Matrix,
    id: usize,
    latent_offset: usize,
}

fn example(pair: &UtterancePair, id: usize, crop: usize, aligned: bool, rng: &mut impl Rng) -> Result<Example> {
    let mut c = data::crop_pair(pair, crop, rng);
    if aligned && c.offset % LATENT_STRIDE != 0 {
        let offset = c.offset - c.offset % LATENT_STRIDE;
        c = data::Crop {
            noisy: pair.noisy.segment(offset, crop),
            clean: pair.clean.segment(offset, crop),
            offset,
        };
    }
    let noisy = dsp::stft(&c.noisy, WINDOW_LEN, HOP)?;
    let clean = dsp::stft(&c.clean, WINDOW_LEN, HOP)?;
    Ok(Example {
        samples: c.noisy.into_samples(),
        noisy_log1p: noisy.log1p_mag,
        clean_log1p: clean.log1p_mag,
        id,
        latent_offset: c.offset / LATENT_STRIDE,
    })
}

fn stacked(rows: impl Iterator<Item = Matrix>) -> Result<Tensor> {
    let mats: Vec<Matrix> = rows.collect();
    let cols = mats[0].cols();
    let data: Vec<f64> = mats.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    Tensor::new(vec![data.len() / cols, cols], data)
}

/// Forward a batch; returns the graph and the loss node.
fn batch_loss(
    sys: &Enhancer,
    batch: &[&Example],
    pairs: &[UtterancePair],
    embeddings: Option<&BTreeMap<String, LayerStack>>,
    trainable: bool,
) -> Result<(Graph, super::system::EnhancerBindings, crate::autodiff::Var)> {
    let mut g = Graph::new();
    let b = if trainable { sys.bind(&mut g)? } else { sys.bind_frozen(&mut g)? };
    let mut feats = Vec::with_capacity(batch.len());
    for ex in batch {
        let emb = match embeddings {
            Some(map) => {
                let id = &pairs[ex.id].id;
                Some(map.get(id).ok_or_else(|| Error::State(format!("no embedding for `{id}`")))?)
            }
            None => None,
        };
        feats.push(sys.features_graph(&mut g, &b, &ex.samples, &ex.noisy_log1p, emb, ex.latent_offset)?);
    }
    let x = if feats.len() == 1 { feats[0] } else { g.concat(&feats, 0)? };
    let mask = sys.mask_graph(&mut g, &b, x, batch.len())?;
    let noisy = g.constant(stacked(batch.iter().map(|e| e.noisy_log1p.clone()))?)?;
    let clean = g.constant(stacked(batch.iter().map(|e| e.clean_log1p.clone()))?)?;
    let loss = sa_loss_graph(&mut g, mask, noisy, clean)?;
    Ok((g, b, loss))
}

/// Build the untrained system `train` would start from.
pub fn initial_system(cfg: &TrainConfig, source: &FeatureSource<'_>) -> Result<Enhancer> {
    match source {
        FeatureSource::Toy(enc) => Enhancer::with_encoder(cfg.composition, cfg.policy, enc.clone(), cfg.hidden, cfg.seed),
        FeatureSource::Embeddings(map) => {
            ensure!(
                cfg.policy == FreezePolicy::Frozen,
                InvalidInput,
                "precomputed embeddings cannot be fine-tuned; use the frozen policy"
            );
            let first = map
                .values()
                .next()
                .ok_or_else(|| Error::InvalidInput("no embeddings given".into()))?;
            Enhancer::with_embeddings(cfg.composition, first.num_layers(), first.dim(), cfg.hidden, cfg.seed)
        }
    }
}

/// Train on `pairs`, holding out a seeded validation split. Deterministic given the config.
pub fn train(pairs: &[UtterancePair], cfg: &TrainConfig, source: FeatureSource<'_>) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure!(pairs.len() >= 2, InvalidInput, "need at least 2 utterances, got {}", pairs.len());
    for p in pairs {
        dsp::require_working_rate(&p.clean)?;
    }
    let embeddings = match &source {
        FeatureSource::Embeddings(map) => Some(*map),
        FeatureSource::Toy(_) => None,
    };
    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let plan = data::split(&ids, cfg.val_fraction, cfg.seed)?;
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let train_idx: Vec<usize> = plan.train_ids.iter().map(|id| index[id.as_str()]).collect();
    let val_idx: Vec<usize> = plan.val_ids.iter().map(|id| index[id.as_str()]).collect();

    let mut sys = initial_system(cfg, &source)?;
    let initial = sys.clone();
    let mut opt = Optimizers::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let aligned = embeddings.is_some();

    let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_7A1);
    let val_set = val_idx
        .iter()
        .map(|&i| example(&pairs[i], i, cfg.crop_samples, aligned, &mut val_rng))
        .collect::<Result<Vec<_>>>()?;
    let evaluate = |sys: &Enhancer| -> Result<f64> {
        let mut total = 0.0;
        for ex in &val_set {
            let (g, _, loss) = batch_loss(sys, &[ex], pairs, embeddings, false)?;
            total += g.value(loss).item();
        }
        Ok(total / val_set.len() as f64)
    };

    let mut log = Vec::new();
    let initial_val = evaluate(&sys)?;
    log.push(LogRow {
        step: 0,
        split: "val".into(),
        loss: initial_val,
    });
    let (mut best, mut best_val, mut best_step) = (sys.clone(), initial_val, 0);
    let mut since_best = 0;

    let epoch = train_idx.len().div_ceil(cfg.batch_size);
    let eval_every = cfg.eval_every.unwrap_or(epoch);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut steps = 0;
    for step in 1..=cfg.max_steps {
        let mut batch_ids = Vec::with_capacity(cfg.batch_size);
        while batch_ids.len() < cfg.batch_size.min(train_idx.len()) {
            if order.is_empty() {
                order = train_idx.clone();
                order.shuffle(&mut rng);
            }
            batch_ids.push(order.pop().expect("refilled above"));
        }
        let batch = batch_ids
            .iter()
            .map(|&i| example(&pairs[i], i, cfg.crop_samples, aligned, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&Example> = batch.iter().collect();
        let (g, b, loss) = batch_loss(&sys, &refs, pairs, embeddings, true)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numerical(format!("training loss is {value} at step {step}")));
        }
        let grads = g.backward(loss)?;
        sys.zero_grad();
        sys.accumulate(&b, &grads)?;
        sys.step(&mut opt)?;
        steps = step;
        log.push(LogRow {
            step,
            split: "train".into(),
            loss: value,
        });

        if step % eval_every == 0 || step == cfg.max_steps {
            let v = evaluate(&sys)?;
            log.push(LogRow {
                step,
                split: "val".into(),
                loss: v,
            });
            if v < best_val {
                best_val = v;
                best_step = step;
                best = sys.clone();
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        initial,
        best,
        last: sys,
        initial_val,
        best_val,
        best_step,
        steps,
        log,
        split: plan,
    })
}

/// CSV with header `step,split,loss`.
pub fn write_log_csv(rows: &[LogRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    fsutil::write_atomic(path, &bytes)
}
