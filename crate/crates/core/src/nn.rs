//! Layers assembled from graph primitives, plus their parameter constructors.
//!
//! Sequences are `[frames, features]` matrices. LSTM gate order is
//! input, forget, cell, output.

use rand::Rng;

use crate::autodiff::{init_bias, init_weight, Bindings, Graph, ParamGroup, Tensor, Var};
use crate::error::{ensure, Result};

pub fn add_linear(
    group: &mut ParamGroup,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    group.insert(format!("{prefix}.weight"), init_weight(fan_in, fan_out, rng), true)?;
    group.insert(format!("{prefix}.bias"), init_bias(fan_out), true)
}

pub fn linear(g: &mut Graph, p: &Bindings, prefix: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{prefix}.weight"))?;
    let b = p.var(&format!("{prefix}.bias"))?;
    let xw = g.matmul(x, w)?;
    g.add_bias(xw, b)
}

pub fn add_layer_norm(group: &mut ParamGroup, prefix: &str, dim: usize) -> Result<()> {
    group.insert(format!("{prefix}.gamma"), Tensor::filled(&[dim], 1.0), true)?;
    group.insert(format!("{prefix}.beta"), Tensor::zeros(&[dim]), true)
}

pub fn layer_norm(g: &mut Graph, p: &Bindings, prefix: &str, x: Var) -> Result<Var> {
    let gamma = p.var(&format!("{prefix}.gamma"))?;
    let beta = p.var(&format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta)
}

/// One LSTM direction: `{prefix}.w_ih [in, 4H]`, `{prefix}.w_hh [H, 4H]`, `{prefix}.bias [4H]`.
pub fn add_lstm(
    group: &mut ParamGroup,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    group.insert(format!("{prefix}.w_ih"), init_weight(input, 4 * hidden, rng), true)?;
    group.insert(format!("{prefix}.w_hh"), init_weight(hidden, 4 * hidden, rng), true)?;
    group.insert(format!("{prefix}.bias"), init_bias(4 * hidden), true)
}

/// Run one LSTM direction over `x [T, in]`, returning hidden states `[T, H]` in time order.
pub fn lstm(g: &mut Graph, p: &Bindings, prefix: &str, x: Var, reverse: bool) -> Result<Var> {
    lstm_batched(g, p, prefix, x, 1, reverse)
}

/// LSTM over `batch` equal-length sequences stacked sequence-major in `x [batch * T, in]`.
/// The output keeps the same row order.
pub fn lstm_batched(
    g: &mut Graph,
    p: &Bindings,
    prefix: &str,
    x: Var,
    batch: usize,
    reverse: bool,
) -> Result<Var> {
    let w_ih = p.var(&format!("{prefix}.w_ih"))?;
    let w_hh = p.var(&format!("{prefix}.w_hh"))?;
    let bias = p.var(&format!("{prefix}.bias"))?;
    let hidden = g.shape(w_hh).0;
    let rows = g.shape(x).0;
    ensure!(
        batch > 0 && rows % batch == 0,
        Shape,
        "{rows} rows do not split into {batch} sequences"
    );
    let frames = rows / batch;

    let xw = g.matmul(x, w_ih)?;
    let proj = g.add_bias(xw, bias)?;
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    let mut outputs = vec![None; frames];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..frames).rev())
    } else {
        Box::new(0..frames)
    };
    for t in order {
        let mut pre = if batch == 1 {
            g.slice(proj, 0, t, 1)?
        } else {
            let idx: Vec<usize> = (0..batch).map(|b| b * frames + t).collect();
            g.gather_rows(proj, &idx)?
        };
        if let Some(prev) = h {
            let rec = g.matmul(prev, w_hh)?;
            pre = g.add(pre, rec)?;
        }
        let i_pre = g.slice(pre, 1, 0, hidden)?;
        let i = g.sigmoid(i_pre)?;
        let c_pre = g.slice(pre, 1, 2 * hidden, hidden)?;
        let cand = g.tanh(c_pre)?;
        let o_pre = g.slice(pre, 1, 3 * hidden, hidden)?;
        let o = g.sigmoid(o_pre)?;
        let ic = g.mul(i, cand)?;
        let cell = match c {
            Some(prev_c) => {
                let f_pre = g.slice(pre, 1, hidden, hidden)?;
                let f = g.sigmoid(f_pre)?;
                let kept = g.mul(f, prev_c)?;
                g.add(kept, ic)?
            }
            // c_{-1} = 0, so the forget gate has no effect.
            None => ic,
        };
        let squashed = g.tanh(cell)?;
        let out = g.mul(o, squashed)?;
        outputs[t] = Some(out);
        h = Some(out);
        c = Some(cell);
    }
    let outputs: Vec<Var> = outputs.into_iter().map(|o| o.expect("every frame visited")).collect();
    let stacked = g.concat(&outputs, 0)?;
    if batch == 1 {
        return Ok(stacked);
    }
    // rows are (t, b) here; put them back as (b, t)
    let idx: Vec<usize> = (0..batch)
        .flat_map(|b| (0..frames).map(move |t| t * batch + b))
        .collect();
    g.gather_rows(stacked, &idx)
}

/// Bidirectional layer with parameters under `{prefix}.fwd` and `{prefix}.bwd`.
pub fn add_blstm(
    group: &mut ParamGroup,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    add_lstm(group, &format!("{prefix}.fwd"), input, hidden, rng)?;
    add_lstm(group, &format!("{prefix}.bwd"), input, hidden, rng)
}

/// `[T, in] -> [T, 2H]`, forward states then backward states per frame.
pub fn blstm(g: &mut Graph, p: &Bindings, prefix: &str, x: Var) -> Result<Var> {
    blstm_batched(g, p, prefix, x, 1)
}

pub fn blstm_batched(g: &mut Graph, p: &Bindings, prefix: &str, x: Var, batch: usize) -> Result<Var> {
    let fwd = lstm_batched(g, p, &format!("{prefix}.fwd"), x, batch, false)?;
    let bwd = lstm_batched(g, p, &format!("{prefix}.bwd"), x, batch, true)?;
    g.concat(&[fwd, bwd], 1)
}

/// Pre-norm single-head self-attention block followed by a two-layer
/// feed-forward sublayer, both residual.
pub fn add_attention_block(
    group: &mut ParamGroup,
    prefix: &str,
    dim: usize,
    ff_dim: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    add_layer_norm(group, &format!("{prefix}.ln1"), dim)?;
    add_linear(group, &format!("{prefix}.attn.q"), dim, dim, rng)?;
    // A key bias shifts every score in a row equally and cancels in the softmax.
    group.insert(format!("{prefix}.attn.k.weight"), init_weight(dim, dim, rng), true)?;
    add_linear(group, &format!("{prefix}.attn.v"), dim, dim, rng)?;
    add_linear(group, &format!("{prefix}.attn.o"), dim, dim, rng)?;
    add_layer_norm(group, &format!("{prefix}.ln2"), dim)?;
    add_linear(group, &format!("{prefix}.ff1"), dim, ff_dim, rng)?;
    add_linear(group, &format!("{prefix}.ff2"), ff_dim, dim, rng)
}

pub fn attention_block(g: &mut Graph, p: &Bindings, prefix: &str, x: Var) -> Result<Var> {
    let dim = g.shape(x).1;
    let h = layer_norm(g, p, &format!("{prefix}.ln1"), x)?;
    let q = linear(g, p, &format!("{prefix}.attn.q"), h)?;
    let k = g.matmul(h, p.var(&format!("{prefix}.attn.k.weight"))?)?;
    let v = linear(g, p, &format!("{prefix}.attn.v"), h)?;
    let kt = g.transpose(k)?;
    let raw = g.matmul(q, kt)?;
    let scores = g.scale(raw, 1.0 / (dim as f64).sqrt())?;
    let weights = g.softmax(scores)?;
    let mixed = g.matmul(weights, v)?;
    let attn = linear(g, p, &format!("{prefix}.attn.o"), mixed)?;
    let x1 = g.add(x, attn)?;

    let h2 = layer_norm(g, p, &format!("{prefix}.ln2"), x1)?;
    let f = linear(g, p, &format!("{prefix}.ff1"), h2)?;
    let f = g.tanh(f)?;
    let f = linear(g, p, &format!("{prefix}.ff2"), f)?;
    g.add(x1, f)
}
