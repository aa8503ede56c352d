//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! A [`Graph`] records every primitive as it is evaluated. Leaves are either
//! differentiable variables or constants; [`Graph::backward`] walks the tape
//! in reverse from a scalar and returns the gradient of every node that
//! depends on a differentiable leaf.

use matrixmultiply::dgemm;

use super::Tensor;
use crate::error::{ensure, Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv1d {
        input: Var,
        weight: Var,
        kernel: usize,
        stride: usize,
        pad_right: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    GatherRows { x: Var, indices: Vec<usize> },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Abs(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation. Confined to one thread while in use.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn shape2(t: &Tensor) -> (usize, usize) {
    t.dims2().expect("graph tensors are rank <= 2")
}

/// `c[m x n] (+)= a[m x k] * b[k x n]` with explicit element strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c[..m * n].iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    // SAFETY: the strides describe in-bounds views of `a`, `b` and the
    // row-major `m x n` block of `c`; callers check the extents.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape2(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf.
    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        value.dims2()?;
        Ok(self.push(value, Op::Leaf, requires_grad))
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value at element {i} of {}",
                op_name(&op)
            )));
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, op, needs_grad))
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        ensure!(k == k2, Shape, "matmul {m}x{k} by {k2}x{n}");
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), (k, 1), self.data(b), (n, 1), &mut out, false);
        self.record(vec![m, n], out, Op::MatMul(a, b), &[a, b])
    }

    /// Strided 1-D convolution of `input [T, c_in]` with `weight [kernel * c_in, c_out]`.
    ///
    /// Weight rows are ordered `(tap, in_channel)`. The input is zero-padded by
    /// `pad_right` frames; output length is `(T + pad_right - kernel) / stride + 1`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        kernel: usize,
        stride: usize,
        pad_right: usize,
    ) -> Result<Var> {
        ensure!(kernel > 0 && stride > 0, InvalidInput, "kernel and stride must be positive");
        let (t, c_in) = self.shape(input);
        let (wr, c_out) = self.shape(weight);
        ensure!(
            wr == kernel * c_in,
            Shape,
            "conv weight has {wr} rows, expected {kernel} x {c_in}"
        );
        let padded = t + pad_right;
        ensure!(
            padded >= kernel,
            Shape,
            "conv input of {t} frames (+{pad_right} pad) shorter than kernel {kernel}"
        );
        let t_out = (padded - kernel) / stride + 1;
        let x = padded_rows(self.data(input), t, c_in, pad_right);
        let mut out = vec![0.0; t_out * c_out];
        gemm(
            t_out,
            kernel * c_in,
            c_out,
            &x,
            (stride * c_in, 1),
            self.data(weight),
            (c_out, 1),
            &mut out,
            false,
        );
        self.record(
            vec![t_out, c_out],
            out,
            Op::Conv1d {
                input,
                weight,
                kernel,
                stride,
                pad_right,
            },
            &[input, weight],
        )
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        ensure!(sa == sb, Shape, "{what}: {sa:?} vs {sb:?}");
        Ok(vec![sa.0, sa.1])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "add")?;
        let out = zip_map(self.data(a), self.data(b), |x, y| x + y);
        self.record(shape, out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "sub")?;
        let out = zip_map(self.data(a), self.data(b), |x, y| x - y);
        self.record(shape, out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape(a, b, "mul")?;
        let out = zip_map(self.data(a), self.data(b), |x, y| x * y);
        self.record(shape, out, Op::Mul(a, b), &[a, b])
    }

    /// `x [R, C] + bias [C]`, broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (br, bc) = self.shape(bias);
        ensure!(br == 1 && bc == c, Shape, "bias {br}x{bc} for {r}x{c} input");
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks(c)
            .flat_map(|row| row.iter().zip(b).map(|(v, bb)| v + bb))
            .collect();
        self.record(vec![r, c], out, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let (r, c) = self.shape(x);
        let out = self.data(x).iter().map(|v| v * factor).collect();
        self.record(vec![r, c], out, Op::Scale(x, factor), &[x])
    }

    /// Concatenate along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        ensure!(!inputs.is_empty(), InvalidInput, "concat of nothing");
        ensure!(axis < 2, InvalidInput, "concat axis {axis} out of range");
        let shapes: Vec<_> = inputs.iter().map(|&v| self.shape(v)).collect();
        let (out_shape, out) = if axis == 0 {
            let c = shapes[0].1;
            ensure!(
                shapes.iter().all(|s| s.1 == c),
                Shape,
                "row concat with differing widths {shapes:?}"
            );
            let rows = shapes.iter().map(|s| s.0).sum::<usize>();
            let mut out = Vec::with_capacity(rows * c);
            for &v in inputs {
                out.extend_from_slice(self.data(v));
            }
            ((rows, c), out)
        } else {
            let r = shapes[0].0;
            ensure!(
                shapes.iter().all(|s| s.0 == r),
                Shape,
                "column concat with differing heights {shapes:?}"
            );
            let cols = shapes.iter().map(|s| s.1).sum::<usize>();
            let mut out = Vec::with_capacity(r * cols);
            for row in 0..r {
                for (&v, s) in inputs.iter().zip(&shapes) {
                    out.extend_from_slice(&self.data(v)[row * s.1..(row + 1) * s.1]);
                }
            }
            ((r, cols), out)
        };
        self.record(
            vec![out_shape.0, out_shape.1],
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let out = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        self.record(vec![r, c], out, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let out = self.data(x).iter().map(|v| v.tanh()).collect();
        self.record(vec![r, c], out, Op::Tanh(x), &[x])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let mut out = Vec::with_capacity(r * c);
        for row in self.data(x).chunks(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            out.extend(row.iter().map(|v| (v - max).exp()));
            let sum: f64 = out[start..].iter().sum();
            out[start..].iter_mut().for_each(|v| *v /= sum);
        }
        self.record(vec![r, c], out, Op::Softmax(x), &[x])
    }

    /// Normalize each row to zero mean and unit variance, then `* gamma + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        ensure!(
            self.shape(gamma) == (1, c) && self.shape(beta) == (1, c),
            Shape,
            "layer norm affine params must be [{c}]"
        );
        let mut xhat = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for row in self.data(x).chunks(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            xhat.extend(row.iter().map(|v| (v - mean) * inv));
        }
        let (g, b) = (self.data(gamma), self.data(beta));
        let out = xhat
            .chunks(c)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((v, gg), bb)| v * gg + bb))
            .collect();
        self.record(
            vec![r, c],
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        ensure!(axis < 2, InvalidInput, "slice axis {axis} out of range");
        let extent = if axis == 0 { r } else { c };
        ensure!(
            len > 0 && start + len <= extent,
            Shape,
            "slice {start}..{} of extent {extent}",
            start + len
        );
        let data = self.data(x);
        let (shape, out) = if axis == 0 {
            (vec![len, c], data[start * c..(start + len) * c].to_vec())
        } else {
            let out = data
                .chunks(c)
                .flat_map(|row| row[start..start + len].iter().copied())
                .collect();
            (vec![r, len], out)
        };
        self.record(shape, out, Op::Slice { x, axis, start, len }, &[x])
    }

    /// Row `i` of the output is row `indices[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        ensure!(!indices.is_empty(), InvalidInput, "gather of no rows");
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::Shape(format!("row index {bad} out of {r}")));
        }
        let data = self.data(x);
        let out = indices
            .iter()
            .flat_map(|&i| data[i * c..(i + 1) * c].iter().copied())
            .collect();
        self.record(
            vec![indices.len(), c],
            out,
            Op::GatherRows {
                x,
                indices: indices.to_vec(),
            },
            &[x],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let data = self.data(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = data[i * c + j];
            }
        }
        self.record(vec![c, r], out, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        ensure!(r * c == rows * cols, Shape, "reshape {r}x{c} to {rows}x{cols}");
        let out = self.data(x).to_vec();
        self.record(vec![rows, cols], out, Op::Reshape(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        self.record(vec![1], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.record(vec![1], vec![s], Op::Mean(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let out = self.data(x).iter().map(|v| v.abs()).collect();
        self.record(vec![r, c], out, Op::Abs(x), &[x])
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = &self.nodes[loss.0].value;
        ensure!(
            lv.numel() == 1,
            InvalidInput,
            "backward needs a scalar loss, got shape {:?}",
            lv.shape()
        );
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            self.propagate(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot =
            grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.shape(a);
                let n = self.shape(b).1;
                let (da, db) = (self.data(a), self.data(b));
                // dA = dY B^T, dB = A^T dY
                self.accumulate(grads, a, |g| {
                    gemm(m, n, k, gy, (n, 1), db, (1, n), g, true)
                });
                self.accumulate(grads, b, |g| {
                    gemm(k, m, n, da, (1, k), gy, (n, 1), g, true)
                });
            }
            &Op::Conv1d {
                input,
                weight,
                kernel,
                stride,
                pad_right,
            } => {
                let (t, c_in) = self.shape(input);
                let c_out = self.shape(weight).1;
                let t_out = node.value.dims2().unwrap().0;
                let width = kernel * c_in;
                if self.nodes[weight.0].needs_grad {
                    let x = padded_rows(self.data(input), t, c_in, pad_right);
                    self.accumulate(grads, weight, |g| {
                        gemm(width, t_out, c_out, &x, (1, stride * c_in), gy, (c_out, 1), g, true)
                    });
                }
                if self.nodes[input.0].needs_grad {
                    let w = self.data(weight);
                    let mut cols = vec![0.0; t_out * width];
                    gemm(t_out, c_out, width, gy, (c_out, 1), w, (1, c_out), &mut cols, false);
                    self.accumulate(grads, input, |g| {
                        for (to, col) in cols.chunks(width).enumerate() {
                            let base = to * stride * c_in;
                            let end = (base + width).min(t * c_in);
                            if base >= end {
                                continue;
                            }
                            for (gi, ci) in g[base..end].iter_mut().zip(col) {
                                *gi += ci;
                            }
                        }
                    });
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, |g| add_into(g, gy));
                self.accumulate(grads, b, |g| add_into(g, gy));
            }
            &Op::Sub(a, b) => {
                self.accumulate(grads, a, |g| add_into(g, gy));
                self.accumulate(grads, b, |g| g.iter_mut().zip(gy).for_each(|(x, d)| *x -= d));
            }
            &Op::Mul(a, b) => {
                let (da, db) = (self.data(a), self.data(b));
                self.accumulate(grads, a, |g| {
                    for ((x, d), w) in g.iter_mut().zip(gy).zip(db) {
                        *x += d * w;
                    }
                });
                self.accumulate(grads, b, |g| {
                    for ((x, d), w) in g.iter_mut().zip(gy).zip(da) {
                        *x += d * w;
                    }
                });
            }
            &Op::AddBias(x, bias) => {
                self.accumulate(grads, x, |g| add_into(g, gy));
                let c = self.shape(bias).1;
                self.accumulate(grads, bias, |g| {
                    for row in gy.chunks(c) {
                        add_into(g, row);
                    }
                });
            }
            &Op::Scale(x, f) => {
                self.accumulate(grads, x, |g| g.iter_mut().zip(gy).for_each(|(v, d)| *v += d * f));
            }
            Op::Concat { inputs, axis } => {
                let shapes: Vec<_> = inputs.iter().map(|&v| self.shape(v)).collect();
                if *axis == 0 {
                    let mut offset = 0;
                    for (&v, s) in inputs.iter().zip(&shapes) {
                        let n = s.0 * s.1;
                        self.accumulate(grads, v, |g| add_into(g, &gy[offset..offset + n]));
                        offset += n;
                    }
                } else {
                    let total: usize = shapes.iter().map(|s| s.1).sum();
                    let mut col = 0;
                    for (&v, s) in inputs.iter().zip(&shapes) {
                        self.accumulate(grads, v, |g| {
                            for r in 0..s.0 {
                                let src = &gy[r * total + col..r * total + col + s.1];
                                add_into(&mut g[r * s.1..(r + 1) * s.1], src);
                            }
                        });
                        col += s.1;
                    }
                }
            }
            &Op::Sigmoid(x) => self.accumulate(grads, x, |g| {
                for ((v, d), s) in g.iter_mut().zip(gy).zip(y) {
                    *v += d * s * (1.0 - s);
                }
            }),
            &Op::Tanh(x) => self.accumulate(grads, x, |g| {
                for ((v, d), t) in g.iter_mut().zip(gy).zip(y) {
                    *v += d * (1.0 - t * t);
                }
            }),
            &Op::Softmax(x) => {
                let c = self.shape(x).1;
                self.accumulate(grads, x, |g| {
                    for ((gr, dr), yr) in g.chunks_mut(c).zip(gy.chunks(c)).zip(y.chunks(c)) {
                        let dot: f64 = dr.iter().zip(yr).map(|(d, s)| d * s).sum();
                        for ((v, d), s) in gr.iter_mut().zip(dr).zip(yr) {
                            *v += s * (d - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = self.shape(*x).1;
                let gam = self.data(*gamma);
                self.accumulate(grads, *x, |g| {
                    let n = c as f64;
                    for (r, (gr, dr)) in g.chunks_mut(c).zip(gy.chunks(c)).enumerate() {
                        let xr = &xhat[r * c..(r + 1) * c];
                        let dxhat: Vec<f64> = dr.iter().zip(gam).map(|(d, w)| d * w).collect();
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xr).map(|(a, b)| a * b).sum();
                        for ((v, dh), xh) in gr.iter_mut().zip(&dxhat).zip(xr) {
                            *v += inv_std[r] / n * (n * dh - s1 - xh * s2);
                        }
                    }
                });
                self.accumulate(grads, *gamma, |g| {
                    for (dr, xr) in gy.chunks(c).zip(xhat.chunks(c)) {
                        for ((v, d), xh) in g.iter_mut().zip(dr).zip(xr) {
                            *v += d * xh;
                        }
                    }
                });
                self.accumulate(grads, *beta, |g| {
                    for dr in gy.chunks(c) {
                        add_into(g, dr);
                    }
                });
            }
            &Op::Slice { x, axis, start, len } => {
                let c = self.shape(x).1;
                self.accumulate(grads, x, |g| {
                    if axis == 0 {
                        add_into(&mut g[start * c..(start + len) * c], gy);
                    } else {
                        for (gr, dr) in g.chunks_mut(c).zip(gy.chunks(len)) {
                            add_into(&mut gr[start..start + len], dr);
                        }
                    }
                });
            }
            Op::GatherRows { x, indices } => {
                let c = self.shape(*x).1;
                self.accumulate(grads, *x, |g| {
                    for (dr, &i) in gy.chunks(c).zip(indices) {
                        add_into(&mut g[i * c..(i + 1) * c], dr);
                    }
                });
            }
            &Op::Transpose(x) => {
                let (r, c) = self.shape(x);
                self.accumulate(grads, x, |g| {
                    for i in 0..r {
                        for j in 0..c {
                            g[i * c + j] += gy[j * r + i];
                        }
                    }
                });
            }
            &Op::Reshape(x) => self.accumulate(grads, x, |g| add_into(g, gy)),
            &Op::Sum(x) => self.accumulate(grads, x, |g| g.iter_mut().for_each(|v| *v += gy[0])),
            &Op::Mean(x) => {
                let n = self.nodes[x.0].value.numel() as f64;
                self.accumulate(grads, x, |g| g.iter_mut().for_each(|v| *v += gy[0] / n));
            }
            &Op::Abs(x) => {
                let xd = self.data(x);
                self.accumulate(grads, x, |g| {
                    for ((v, d), xi) in g.iter_mut().zip(gy).zip(xd) {
                        let s = if *xi > 0.0 {
                            1.0
                        } else if *xi < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *v += d * s;
                    }
                });
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::Conv1d { .. } => "conv1d",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddBias(..) => "add_bias",
        Op::Scale(..) => "scale",
        Op::Concat { .. } => "concat",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Softmax(_) => "softmax",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Slice { .. } => "slice",
        Op::GatherRows { .. } => "gather_rows",
        Op::Transpose(_) => "transpose",
        Op::Reshape(_) => "reshape",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::Abs(_) => "abs",
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn padded_rows(data: &[f64], rows: usize, cols: usize, pad: usize) -> std::borrow::Cow<'_, [f64]> {
    if pad == 0 {
        return std::borrow::Cow::Borrowed(data);
    }
    let mut v = Vec::with_capacity((rows + pad) * cols);
    v.extend_from_slice(data);
    v.resize((rows + pad) * cols, 0.0);
    std::borrow::Cow::Owned(v)
}
