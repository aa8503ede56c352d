#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslse::autodiff::{Adam, AdamConfig, Graph, ParamGroup, Tensor};
use sslse::data::{self, UtterancePair};
use sslse::encoder::{EncoderConfig, LayerStack, FreezePolicy, ToyEncoder, BLOCKS_PREFIX, EXTRACTOR_PREFIX};
use sslse::enhancer::{train, FeatureSource, TrainConfig};
use sslse::fusion::{softmax, weighted_sum_graph, Composition};
use sslse::matrix::Matrix;

/// Small `RunConfig` JSON for driving the CLI in tests.
pub const TINY_RUN_CONFIG: &str = r#"{
  "seed": 1,
  "train": {
    "crop_samples": 3200,
    "batch_size": 2,
    "hidden": 6,
    "max_steps": 8,
    "val_fraction": 0.25,
    "eval_every": 4,
    "encoder": {"dim": 8, "blocks": 4, "channels": 6, "ff_dim": 12}
  },
  "synth": {"utterances": 8, "samples": 16000, "snrs": [0, 5]}
}"#;

pub fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        dim: 8,
        blocks: 2,
        channels: 6,
        ff_dim: 12,
    }
}

pub fn tiny_config(policy: FreezePolicy, steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        crop_samples: 3200,
        batch_size: 2,
        lr: 1e-3,
        max_steps: steps,
        val_fraction: 0.25,
        seed,
        policy,
        composition: Composition::WsLog1p,
        hidden: 6,
        patience: 0,
        eval_every: Some(25),
        encoder: tiny_encoder(),
    }
}

pub fn tiny_corpus(seed: u64) -> Vec<UtterancePair> {
    data::toy_corpus(8, 4800, &[0.0, 5.0, 10.0], seed).unwrap()
}

/// Names of the tensors whose values differ between `a` and `b`.
pub fn changed(a: &ParamGroup, b: &ParamGroup) -> BTreeMap<String, bool> {
    a.iter()
        .map(|(n, p)| (n.to_string(), p.value.data() != b.value(n).unwrap().data()))
        .collect()
}

#[derive(Debug)]
pub struct FreezeCheck {
    pub policy: FreezePolicy,
    /// Every tensor that must stay fixed did.
    pub frozen_ok: bool,
    /// Every tensor that may train did change.
    pub trained_ok: bool,
    pub detail: String,
}

impl FreezeCheck {
    pub fn passed(&self) -> bool {
        self.frozen_ok && self.trained_ok
    }
}

/// Train each policy for `steps` steps and compare start and end parameters bitwise.
pub fn freeze_suite(steps: usize) -> Vec<FreezeCheck> {
    let pairs = tiny_corpus(4);
    FreezePolicy::ALL
        .into_iter()
        .map(|policy| {
            let cfg = tiny_config(policy, steps, 9);
            let enc = ToyEncoder::new(cfg.encoder, 21).unwrap();
            let out = train(&pairs, &cfg, FeatureSource::Toy(enc.clone())).unwrap();
            let start = out.initial.encoder.as_ref().unwrap();
            let end = out.last.encoder.as_ref().unwrap();
            let enc_changed = changed(&start.params, &end.params);
            let must_freeze = |name: &str| match policy {
                FreezePolicy::Frozen => true,
                FreezePolicy::Pf => name.starts_with(EXTRACTOR_PREFIX),
                FreezePolicy::Ef | FreezePolicy::Tfs => false,
            };
            let mut frozen_ok = true;
            let mut trained_ok = true;
            let mut detail = Vec::new();
            for (name, moved) in &enc_changed {
                assert!(name.starts_with(EXTRACTOR_PREFIX) || name.starts_with(BLOCKS_PREFIX));
                if must_freeze(name) && *moved {
                    frozen_ok = false;
                    detail.push(format!("{name} moved"));
                } else if !must_freeze(name) && !moved {
                    trained_ok = false;
                    detail.push(format!("{name} did not move"));
                }
            }
            // the mask model and the layer weights always train
            for (name, moved) in changed(&out.initial.mask.params, &out.last.mask.params)
                .into_iter()
                .chain(changed(&out.initial.fusion, &out.last.fusion))
            {
                if !moved {
                    trained_ok = false;
                    detail.push(format!("{name} did not move"));
                }
            }
            if policy == FreezePolicy::Tfs {
                // constant-initialized tensors (biases, norm gains) are redrawn to the same values
                let moved = changed(&enc.params, &start.params);
                let redrawn = enc
                    .params
                    .iter()
                    .filter(|(_, p)| p.value.data().iter().any(|&v| v != p.value.data()[0]))
                    .all(|(n, _)| moved[n]);
                if !redrawn {
                    trained_ok = false;
                    detail.push("TFS kept some initial encoder weights".into());
                }
            }
            FreezeCheck {
                policy,
                frozen_ok,
                trained_ok,
                detail: detail.join("; "),
            }
        })
        .collect()
}

/// Written from the definition with plain loops over `values[l][t][d]`.
pub fn brute_force(clean: &[Vec<Vec<f64>>], noisy: &[Vec<Vec<f64>>], layer: usize) -> f64 {
    let c = &clean[layer];
    let n = &noisy[layer];
    let frames = c.len();
    let dims = c[0].len();
    let normalize = |x: &Vec<Vec<f64>>| {
        let mut out = vec![vec![0.0; dims]; frames];
        for d in 0..dims {
            let mut mu = 0.0;
            for t in 0..frames {
                mu += x[t][d];
            }
            mu /= frames as f64;
            let mut var = 0.0;
            for t in 0..frames {
                var += (x[t][d] - mu) * (x[t][d] - mu);
            }
            var /= frames as f64;
            let mut sigma = var.sqrt();
            if sigma < 1e-8 {
                sigma = 1e-8;
            }
            for t in 0..frames {
                out[t][d] = (x[t][d] - mu) / sigma;
            }
        }
        out
    };
    let zc = normalize(c);
    let zn = normalize(n);
    let mut total = 0.0;
    for t in 0..frames {
        let mut sq = 0.0;
        for d in 0..dims {
            sq += (zc[t][d] - zn[t][d]).powi(2);
        }
        total += sq;
    }
    total / frames as f64
}

pub fn raw(rng: &mut ChaCha8Rng, layers: usize, frames: usize, dims: usize) -> Vec<Vec<Vec<f64>>> {
    (0..layers)
        .map(|_| {
            (0..frames)
                .map(|_| (0..dims).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect()
        })
        .collect()
}

pub fn to_stack(v: &[Vec<Vec<f64>>]) -> LayerStack {
    let layers = v
        .iter()
        .map(|l| Matrix::from_vec(l.len(), l[0].len(), l.iter().flatten().copied().collect()).unwrap())
        .collect();
    LayerStack::new(layers, 320, 16_000).unwrap()
}

pub fn affine(v: &[Vec<Vec<f64>>], rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<f64>>> {
    v.iter()
        .map(|layer| {
            let dims = layer[0].len();
            let a: Vec<f64> = (0..dims).map(|_| rng.gen_range(0.1..10.0)).collect();
            let b: Vec<f64> = (0..dims).map(|_| rng.gen_range(-5.0..5.0)).collect();
            layer
                .iter()
                .map(|row| row.iter().enumerate().map(|(d, x)| a[d] * x + b[d]).collect())
                .collect()
        })
        .collect()
}


/// Fit six mixing logits to a random target with Adam and record the
/// softmax weights after every step.
pub fn simplex_trace(steps: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let layers: Vec<Tensor> = (0..6)
        .map(|_| Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let target = Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
    let mut group = ParamGroup::new();
    group.insert("logits", Tensor::zeros(&[6]), true).unwrap();
    let mut adam = Adam::new(AdamConfig {
        lr: 0.05,
        ..AdamConfig::default()
    });
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut g = Graph::new();
        let b = group.bind(&mut g).unwrap();
        let vars: Vec<_> = layers.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let mixed = weighted_sum_graph(&mut g, &vars, b.var("logits").unwrap()).unwrap();
        let tv = g.constant(target.clone()).unwrap();
        let diff = g.sub(mixed, tv).unwrap();
        let sq = g.mul(diff, diff).unwrap();
        let loss = g.mean(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        group.zero_grad();
        group.accumulate_grads(&b, &grads).unwrap();
        adam.step(&mut group).unwrap();
        trace.push(softmax(group.value("logits").unwrap().data()));
    }
    trace
}
