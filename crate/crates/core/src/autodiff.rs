//! Dynamically recorded computation graph with reverse-mode gradients.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already topologically sorted and
//! [`Graph::backward`] is a single reverse sweep. Gradients reaching a node
//! from several consumers are summed.

use crate::scalar::Scalar;
use crate::tensor::{gelu_grad_scalar, pool_bins, Result, Tensor, TensorError};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddRow(Var, Var),
    Sum(Var),
    MeanLast(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        stats: Vec<(T, T)>,
    },
    Pool(Var, usize),
    Reshape(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    SoftmaxCrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    /// Some leaf below this node requires a gradient.
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; it receives a gradient iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let tracked = tensor.requires_grad();
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient stored on a `requires_grad` leaf by the last `backward`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        self.push("transpose", out, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        let out = self.value(a).scale(factor);
        self.push("scale", out, Op::Scale(a, factor), &[a])
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let out = self.value(a).add_row(self.value(row))?;
        self.push("add_row", out, Op::AddRow(a, row), &[a, row])
    }

    /// `x·w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).sum();
        self.push("sum", out, Op::Sum(a), &[a])
    }

    pub fn mean_last(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).mean_last();
        self.push("mean_last", out, Op::MeanLast(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).gelu();
        self.push("gelu", out, Op::Gelu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).softmax_rows();
        self.push("softmax_rows", out, Op::Softmax(a), &[a])
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let (out, stats) = self
            .value(x)
            .layer_norm_stats(self.value(gain), self.value(bias), eps)?;
        let op = Op::LayerNorm { x, gain, bias, stats };
        self.push("layer_norm", out, op, &[x, gain, bias])
    }

    pub fn adaptive_avg_pool_1d(&mut self, x: Var, out_size: usize) -> Result<Var> {
        let out = self.value(x).adaptive_avg_pool_1d(out_size)?;
        self.push("adaptive_avg_pool_1d", out, Op::Pool(x, out_size), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let out = self.value(x).slice_cols(start, end)?;
        self.push("slice_cols", out, Op::SliceCols(x, start), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat_cols(&values)?;
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// `-log softmax(logits)[target]`, computed through a stable log-sum-exp.
    /// The gradient with respect to the logits is `softmax(logits) - onehot`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.value(logits);
        if target >= z.len() {
            return Err(TensorError::Param {
                op: "softmax_cross_entropy",
                msg: format!("class {target} out of range for {} logits", z.len()),
            });
        }
        let probs = z.softmax_rows().reshape(vec![z.len()])?.into_data();
        let max = z.data().iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.data().iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let loss = Tensor::scalar(lse - z.data()[target]);
        let op = Op::SoftmaxCrossEntropy { logits, target, probs };
        self.push("softmax_cross_entropy", loss, op, &[logits])
    }

    /// Reverse sweep from a scalar `loss`. Afterwards every `requires_grad`
    /// leaf that `loss` depends on holds `∂loss/∂leaf`; leaves the loss does
    /// not depend on get a zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::Contract(format!("node {} is not in this graph", loss.0)));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            if node.value.requires_grad() {
                grads[i] = Some(g);
            }
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.value.requires_grad() {
                let n = node.value.len();
                node.value.set_grad(g.unwrap_or_else(|| vec![T::zero(); n]));
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let tracked = |v: Var| self.nodes[v.0].tracked;
        let mut send = |v: Var, contrib: Vec<T>| {
            if !self.nodes[v.0].tracked {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(contrib).for_each(|(a, c)| *a = *a + c),
                slot @ None => *slot = Some(contrib),
            }
        };

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let p = bv.shape()[1];
                if tracked(a) {
                    // dA = dC·Bᵀ
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        let gi = &g[i * p..(i + 1) * p];
                        for kk in 0..k {
                            let brow = &bv.data()[kk * p..(kk + 1) * p];
                            da[i * k + kk] = gi.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                        }
                    }
                    send(a, da);
                }
                if tracked(b) {
                    // dB = Aᵀ·dC
                    let mut db = vec![T::zero(); k * p];
                    for i in 0..m {
                        let gi = &g[i * p..(i + 1) * p];
                        for kk in 0..k {
                            let aik = av.data()[i * k + kk];
                            for (d, &x) in db[kk * p..(kk + 1) * p].iter_mut().zip(gi) {
                                *d = *d + aik * x;
                            }
                        }
                    }
                    send(b, db);
                }
            }
            &Op::Transpose(a) => {
                let (r, c) = (val(a).shape()[0], val(a).shape()[1]);
                let mut da = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                send(a, da);
            }
            &Op::Add(a, b) => {
                send(a, g.to_vec());
                send(b, g.to_vec());
            }
            &Op::Mul(a, b) => {
                let da = g.iter().zip(val(b).data()).map(|(&x, &y)| x * y).collect();
                let db = g.iter().zip(val(a).data()).map(|(&x, &y)| x * y).collect();
                send(a, da);
                send(b, db);
            }
            &Op::Scale(a, f) => send(a, g.iter().map(|&x| x * f).collect()),
            &Op::AddRow(a, row) => {
                let d = val(row).len();
                let mut drow = vec![T::zero(); d];
                for chunk in g.chunks(d) {
                    drow.iter_mut().zip(chunk).for_each(|(r, &x)| *r = *r + x);
                }
                send(a, g.to_vec());
                send(row, drow);
            }
            &Op::Sum(a) => send(a, vec![g[0]; val(a).len()]),
            &Op::MeanLast(a) => {
                let l = val(a).last_dim();
                let inv = T::one() / T::of(l as f64);
                send(a, g.iter().flat_map(|&x| std::iter::repeat_n(x * inv, l)).collect());
            }
            &Op::Gelu(a) => {
                let da = g
                    .iter()
                    .zip(val(a).data())
                    .map(|(&x, &v)| x * gelu_grad_scalar(v))
                    .collect();
                send(a, da);
            }
            &Op::Softmax(a) => {
                let y = node.value.data();
                let d = node.value.last_dim();
                let mut da = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(d).zip(g.chunks(d)) {
                    let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    da.extend(yr.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
                }
                send(a, da);
            }
            Op::LayerNorm { x, gain, bias, stats } => {
                let xv = val(*x);
                let gv = val(*gain).data();
                let d = xv.last_dim();
                let inv_d = T::one() / T::of(d as f64);
                let mut dx = Vec::with_capacity(xv.len());
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                for ((row, gr), &(mean, rstd)) in xv.data().chunks(d).zip(g.chunks(d)).zip(stats) {
                    let xhat: Vec<T> = row.iter().map(|&v| (v - mean) * rstd).collect();
                    let dxhat: Vec<T> = gr.iter().zip(gv).map(|(&q, &w)| q * w).collect();
                    let m1 = dxhat.iter().copied().sum::<T>() * inv_d;
                    let m2 = dxhat.iter().zip(&xhat).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
                    for j in 0..d {
                        dgain[j] = dgain[j] + gr[j] * xhat[j];
                        dbias[j] = dbias[j] + gr[j];
                        dx.push(rstd * (dxhat[j] - m1 - xhat[j] * m2));
                    }
                }
                send(*x, dx);
                send(*gain, dgain);
                send(*bias, dbias);
            }
            &Op::Pool(a, out) => {
                let l = val(a).last_dim();
                let bins = pool_bins(l, out);
                let mut da = vec![T::zero(); val(a).len()];
                for (drow, grow) in da.chunks_mut(l).zip(g.chunks(out)) {
                    for (&(s, e), &q) in bins.iter().zip(grow) {
                        let share = q / T::of((e - s) as f64);
                        drow[s..e].iter_mut().for_each(|v| *v = *v + share);
                    }
                }
                send(a, da);
            }
            &Op::Reshape(a) => send(a, g.to_vec()),
            &Op::SliceCols(a, start) => {
                let (r, c) = (val(a).shape()[0], val(a).shape()[1]);
                let w = node.value.shape()[1];
                let mut da = vec![T::zero(); r * c];
                for i in 0..r {
                    da[i * c + start..i * c + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                send(a, da);
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let rows = node.value.shape()[0];
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    let mut dp = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        dp.extend_from_slice(&g[i * total + offset..i * total + offset + w]);
                    }
                    send(p, dp);
                    offset += w;
                }
            }
            Op::SoftmaxCrossEntropy { logits, target, probs } => {
                let dl = probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| {
                        let onehot = if i == *target { T::one() } else { T::zero() };
                        g[0] * (p - onehot)
                    })
                    .collect();
                send(*logits, dl);
            }
        }
    }
}
