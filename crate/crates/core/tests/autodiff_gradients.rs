//! Reverse-mode gradients against central differences, primitive by primitive.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sslse::autodiff::{finite_diff_check, Bindings, Graph, ParamGroup, Tensor, Var};
use sslse::nn;
use sslse::Result;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;
const SEEDS: u64 = 20;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(vec![r, c], data).unwrap()
}

/// Contract `y` against a fixed random weighting so no gradient is degenerate.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.shape(y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    let w = g.constant(rand_tensor(&mut rng, r, c))?;
    let prod = g.mul(y, w)?;
    g.sum(prod)
}

fn check<F>(name: &str, shapes: &[(usize, usize)], build: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|&(r, c)| rand_tensor(&mut rng, r, c)).collect();
        let report = finite_diff_check(
            |g, v| {
                let y = build(g, v)?;
                project(g, y, seed)
            },
            &inputs,
            H,
        )
        .unwrap();
        assert!(
            report.max_rel_error < TOL,
            "{name} seed {seed}: {report:?}"
        );
        worst = worst.max(report.max_rel_error);
    }
    println!("{name}: worst relative error {worst:.2e}");
}

#[test]
fn matmul() {
    check("matmul", &[(3, 4), (4, 2)], |g, v| g.matmul(v[0], v[1]));
}

#[test]
fn conv1d_strided_and_padded() {
    check("conv1d", &[(11, 2), (6, 3)], |g, v| g.conv1d(v[0], v[1], 3, 2, 1));
    check("conv1d-k10s5", &[(23, 1), (10, 2)], |g, v| g.conv1d(v[0], v[1], 10, 5, 5));
}

#[test]
fn elementwise_binary() {
    check("add", &[(2, 3), (2, 3)], |g, v| g.add(v[0], v[1]));
    check("sub", &[(2, 3), (2, 3)], |g, v| g.sub(v[0], v[1]));
    check("mul", &[(2, 3), (2, 3)], |g, v| g.mul(v[0], v[1]));
    check("add_bias", &[(4, 3), (1, 3)], |g, v| g.add_bias(v[0], v[1]));
    check("scale", &[(2, 2)], |g, v| g.scale(v[0], -1.7));
}

#[test]
fn concat_both_axes() {
    check("concat0", &[(2, 3), (1, 3)], |g, v| g.concat(&[v[0], v[1]], 0));
    check("concat1", &[(2, 3), (2, 1)], |g, v| g.concat(&[v[0], v[1]], 1));
}

#[test]
fn activations() {
    check("sigmoid", &[(3, 4)], |g, v| g.sigmoid(v[0]));
    check("tanh", &[(3, 4)], |g, v| g.tanh(v[0]));
    check("softmax", &[(3, 5)], |g, v| g.softmax(v[0]));
    check("abs", &[(3, 4)], |g, v| g.abs(v[0]));
}

#[test]
fn layer_norm() {
    check("layer_norm", &[(3, 5), (1, 5), (1, 5)], |g, v| g.layer_norm(v[0], v[1], v[2]));
}

#[test]
fn structural_ops() {
    check("slice0", &[(4, 3)], |g, v| g.slice(v[0], 0, 1, 2));
    check("slice1", &[(4, 3)], |g, v| g.slice(v[0], 1, 1, 2));
    check("transpose", &[(2, 5)], |g, v| g.transpose(v[0]));
    check("reshape", &[(2, 6)], |g, v| g.reshape(v[0], 3, 4));
    check("gather_rows", &[(3, 2)], |g, v| g.gather_rows(v[0], &[0, 0, 2, 1, 2]));
}

#[test]
fn reductions() {
    check("sum", &[(3, 2)], |g, v| {
        let s = g.sum(v[0])?;
        let sq = g.mul(s, s)?;
        Ok(sq)
    });
    check("mean", &[(3, 2)], |g, v| {
        let m = g.mean(v[0])?;
        g.tanh(m)
    });
}

fn group_inputs(group: &ParamGroup) -> (Vec<String>, Vec<Tensor>) {
    group.iter().map(|(n, p)| (n.to_string(), p.value.clone())).unzip()
}

fn bind(names: &[String], vars: &[Var]) -> Bindings {
    Bindings::from_pairs(names.iter().cloned().zip(vars.iter().copied()))
}

#[test]
fn blstm_single_step() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut group = ParamGroup::new();
        nn::add_blstm(&mut group, "rnn", 3, 2, &mut rng).unwrap();
        // nonzero biases exercise the bias path
        for (_, p) in group.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
        let (names, mut inputs) = group_inputs(&group);
        inputs.push(rand_tensor(&mut rng, 1, 3));
        let n = names.len();
        let report = finite_diff_check(
            |g, v| {
                let b = bind(&names, &v[..n]);
                let y = nn::blstm(g, &b, "rnn", v[n])?;
                project(g, y, seed)
            },
            &inputs,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
        worst = worst.max(report.max_rel_error);
    }
    println!("blstm length-1: worst relative error {worst:.2e}");
}

#[test]
fn blstm_sequence() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut group = ParamGroup::new();
        nn::add_blstm(&mut group, "rnn", 2, 3, &mut rng).unwrap();
        let (names, mut inputs) = group_inputs(&group);
        inputs.push(rand_tensor(&mut rng, 4, 2));
        let n = names.len();
        let report = finite_diff_check(
            |g, v| {
                let b = bind(&names, &v[..n]);
                let y = nn::blstm(g, &b, "rnn", v[n])?;
                project(g, y, seed)
            },
            &inputs,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
        worst = worst.max(report.max_rel_error);
    }
    println!("blstm length-4: worst relative error {worst:.2e}");
}

#[test]
fn attention_block() {
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let mut group = ParamGroup::new();
        nn::add_attention_block(&mut group, "blk", 4, 6, &mut rng).unwrap();
        for (_, p) in group.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
        let (names, mut inputs) = group_inputs(&group);
        // spread the scores so the softmax is not flat
        let x = rand_tensor(&mut rng, 3, 4);
        inputs.push(Tensor::new(vec![3, 4], x.data().iter().map(|v| 3.0 * v).collect()).unwrap());
        let n = names.len();
        let report = finite_diff_check(
            |g, v| {
                let b = bind(&names, &v[..n]);
                let y = nn::attention_block(g, &b, "blk", v[n])?;
                project(g, y, seed)
            },
            &inputs,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {report:?}");
        worst = worst.max(report.max_rel_error);
    }
    println!("attention block: worst relative error {worst:.2e}");
}

#[test]
fn linear_graph_is_exact() {
    let coeffs = [0.5, -2.0, 3.25, 1.0];
    let x = Tensor::new(vec![1, 4], vec![0.1, 0.2, -0.3, 0.4]).unwrap();
    let report = finite_diff_check(
        |g, v| {
            let c = g.constant(Tensor::new(vec![1, 4], coeffs.to_vec())?)?;
            let p = g.mul(v[0], c)?;
            g.sum(p)
        },
        &[x],
        H,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-10, "{report:?}");
}

#[test]
fn non_scalar_backward_is_invalid_input() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(&[2, 2])).unwrap();
    let y = g.tanh(x).unwrap();
    assert!(matches!(g.backward(y), Err(sslse::Error::InvalidInput(_))));
}

#[test]
fn sum_gradient_is_all_ones() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::filled(&[3, 2], 0.7)).unwrap();
    let s = g.sum(x).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[1.0; 6]);
}

#[test]
fn library_suite_covers_assembled_graphs() {
    let results = sslse::gradsuite::run_suite(SEEDS).unwrap();
    for case in ["blstm_len4", "blstm_batch2", "attention_block", "layer_fusion", "mask_model_sa_loss"] {
        assert!(results.iter().any(|r| r.case == case), "missing {case}");
    }
    for r in &results {
        assert!(r.passed(), "{r:?}");
    }
}
