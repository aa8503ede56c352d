//! Finite-difference checks over every graph primitive and the assembled
//! recurrent, attention, fusion and mask-model graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{finite_diff_check, Bindings, Graph, ParamGroup, Tensor, Var};
use crate::enhancer::{sa_loss_graph, MaskConfig, MaskModel};
use crate::error::Result;
use crate::{fusion, nn};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub case: String,
    pub seeds: u64,
    pub worst_rel_error: f64,
    pub worst_seed: u64,
    /// Analytic and numeric derivative at the worst element.
    pub analytic: f64,
    pub numeric: f64,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.worst_rel_error < TOLERANCE
    }
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

struct Case {
    name: &'static str,
    /// Returns the inputs for a seed; parameter tensors come first.
    inputs: Box<dyn Fn(&mut ChaCha8Rng) -> Result<Vec<Tensor>>>,
    build: Box<dyn Fn(u64) -> Build>,
}

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![r, c], data).expect("shape matches data")
}

/// Contract `y` with a fixed random weighting into a scalar.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let w = g.constant(rand_tensor(&mut rng, r, c))?;
    let prod = g.mul(y, w)?;
    g.sum(prod)
}

fn primitive(
    name: &'static str,
    shapes: &'static [(usize, usize)],
    op: fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Case {
    Case {
        name,
        inputs: Box::new(move |rng| Ok(shapes.iter().map(|&(r, c)| rand_tensor(rng, r, c)).collect())),
        build: Box::new(move |seed| {
            Box::new(move |g, v| {
                let y = op(g, v)?;
                project(g, y, seed)
            })
        }),
    }
}

fn jitter(group: &mut ParamGroup, rng: &mut ChaCha8Rng, amount: f64) {
    for (_, p) in group.iter_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-amount..amount));
    }
}

fn names_of(group: &ParamGroup) -> Vec<String> {
    group.names().map(String::from).collect()
}

fn values_of(group: &ParamGroup) -> Vec<Tensor> {
    group.iter().map(|(_, p)| p.value.clone()).collect()
}

/// A case whose parameters come from `make` and whose data input has shape `x`.
fn assembled(
    name: &'static str,
    make: fn(&mut ChaCha8Rng) -> Result<ParamGroup>,
    x: (usize, usize),
    x_scale: f64,
    forward: fn(&mut Graph, &Bindings, Var) -> Result<Var>,
) -> Case {
    Case {
        name,
        inputs: Box::new(move |rng| {
            let group = make(rng)?;
            let mut inputs = values_of(&group);
            let t = rand_tensor(rng, x.0, x.1);
            inputs.push(Tensor::new(vec![x.0, x.1], t.data().iter().map(|v| x_scale * v).collect())?);
            Ok(inputs)
        }),
        build: Box::new(move |seed| {
            // Parameter names only depend on the structure, so any seed gives the same list.
            let names = names_of(&make(&mut ChaCha8Rng::seed_from_u64(0)).expect("builds"));
            Box::new(move |g, v| {
                let n = names.len();
                let b = Bindings::from_pairs(names.iter().cloned().zip(v[..n].iter().copied()));
                let y = forward(g, &b, v[n])?;
                project(g, y, seed)
            })
        }),
    }
}

fn blstm_params(rng: &mut ChaCha8Rng) -> Result<ParamGroup> {
    let mut group = ParamGroup::new();
    nn::add_blstm(&mut group, "rnn", 2, 3, rng)?;
    jitter(&mut group, rng, 0.3);
    Ok(group)
}

fn attention_params(rng: &mut ChaCha8Rng) -> Result<ParamGroup> {
    let mut group = ParamGroup::new();
    nn::add_attention_block(&mut group, "blk", 4, 6, rng)?;
    jitter(&mut group, rng, 0.2);
    Ok(group)
}

fn mask_config() -> MaskConfig {
    MaskConfig {
        input_dim: 3,
        hidden: 3,
        layers: 2,
        bins: 4,
    }
}

fn mask_params(rng: &mut ChaCha8Rng) -> Result<ParamGroup> {
    let mut m = MaskModel::new(mask_config(), rng.gen())?;
    jitter(&mut m.params, rng, 0.3);
    Ok(m.params)
}

fn cases() -> Vec<Case> {
    let mut out = vec![
        primitive("matmul", &[(3, 4), (4, 2)], |g, v| g.matmul(v[0], v[1])),
        primitive("conv1d", &[(11, 2), (6, 3)], |g, v| g.conv1d(v[0], v[1], 3, 2, 1)),
        primitive("conv1d_k10_s5", &[(23, 1), (10, 2)], |g, v| g.conv1d(v[0], v[1], 10, 5, 5)),
        primitive("add", &[(2, 3), (2, 3)], |g, v| g.add(v[0], v[1])),
        primitive("sub", &[(2, 3), (2, 3)], |g, v| g.sub(v[0], v[1])),
        primitive("mul", &[(2, 3), (2, 3)], |g, v| g.mul(v[0], v[1])),
        primitive("add_bias", &[(4, 3), (1, 3)], |g, v| g.add_bias(v[0], v[1])),
        primitive("scale", &[(2, 2)], |g, v| g.scale(v[0], -1.7)),
        primitive("concat_rows", &[(2, 3), (1, 3)], |g, v| g.concat(&[v[0], v[1]], 0)),
        primitive("concat_cols", &[(2, 3), (2, 1)], |g, v| g.concat(&[v[0], v[1]], 1)),
        primitive("sigmoid", &[(3, 4)], |g, v| g.sigmoid(v[0])),
        primitive("tanh", &[(3, 4)], |g, v| g.tanh(v[0])),
        primitive("softmax", &[(3, 5)], |g, v| g.softmax(v[0])),
        primitive("abs", &[(3, 4)], |g, v| g.abs(v[0])),
        primitive("layer_norm", &[(3, 5), (1, 5), (1, 5)], |g, v| g.layer_norm(v[0], v[1], v[2])),
        primitive("slice_rows", &[(4, 3)], |g, v| g.slice(v[0], 0, 1, 2)),
        primitive("slice_cols", &[(4, 3)], |g, v| g.slice(v[0], 1, 1, 2)),
        primitive("transpose", &[(2, 5)], |g, v| g.transpose(v[0])),
        primitive("reshape", &[(2, 6)], |g, v| g.reshape(v[0], 3, 4)),
        primitive("gather_rows", &[(3, 2)], |g, v| g.gather_rows(v[0], &[0, 0, 2, 1, 2])),
        primitive("sum", &[(3, 2)], |g, v| {
            let s = g.sum(v[0])?;
            g.mul(s, s)
        }),
        primitive("mean", &[(3, 2)], |g, v| {
            let m = g.mean(v[0])?;
            g.tanh(m)
        }),
        primitive("layer_fusion", &[(3, 4), (3, 4), (3, 4), (1, 3)], |g, v| {
            fusion::weighted_sum_graph(g, &v[..3], v[3])
        }),
    ];
    out.push(assembled("blstm_len1", blstm_params, (1, 2), 1.0, |g, b, x| nn::blstm(g, b, "rnn", x)));
    out.push(assembled("blstm_len4", blstm_params, (4, 2), 1.0, |g, b, x| nn::blstm(g, b, "rnn", x)));
    out.push(assembled("blstm_batch2", blstm_params, (6, 2), 1.0, |g, b, x| {
        nn::blstm_batched(g, b, "rnn", x, 2)
    }));
    // inputs are spread so the attention softmax is not flat
    out.push(assembled("attention_block", attention_params, (3, 4), 3.0, |g, b, x| {
        nn::attention_block(g, b, "blk", x)
    }));
    out.push(Case {
        name: "mask_model_sa_loss",
        inputs: Box::new(|rng| {
            let mut inputs = values_of(&mask_params(rng)?);
            inputs.push(rand_tensor(rng, 6, 3));
            Ok(inputs)
        }),
        build: Box::new(|seed| {
            let model = MaskModel::new(mask_config(), 0).expect("builds");
            let names = names_of(&model.params);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5A);
            let noisy = Tensor::new(vec![6, 4], (0..24).map(|_| rng.gen_range(0.1..2.0)).collect()).expect("shape");
            let clean = Tensor::new(vec![6, 4], (0..24).map(|_| rng.gen_range(0.0..1.5)).collect()).expect("shape");
            Box::new(move |g, v| {
                let n = names.len();
                let b = Bindings::from_pairs(names.iter().cloned().zip(v[..n].iter().copied()));
                let mask = model.forward_graph(g, &b, v[n], 2)?;
                let nv = g.constant(noisy.clone())?;
                let cv = g.constant(clean.clone())?;
                sa_loss_graph(g, mask, nv, cv)
            })
        }),
    });
    out
}

/// Run every case over `seeds` seeds and report the worst relative error of each.
pub fn run_suite(seeds: u64) -> Result<Vec<CaseResult>> {
    cases()
        .into_iter()
        .enumerate()
        .map(|(k, case)| {
            let mut worst = CaseResult {
                case: case.name.to_string(),
                seeds,
                worst_rel_error: 0.0,
                worst_seed: 0,
                analytic: 0.0,
                numeric: 0.0,
            };
            for seed in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * k as u64 + seed);
                let inputs = (case.inputs)(&mut rng)?;
                let report = finite_diff_check((case.build)(seed), &inputs, STEP)?;
                if report.max_rel_error >= worst.worst_rel_error {
                    worst.worst_rel_error = report.max_rel_error;
                    worst.worst_seed = seed;
                    worst.analytic = report.analytic;
                    worst.numeric = report.numeric;
                }
            }
            Ok(worst)
        })
        .collect()
}
