//! Dense row-major tensors and the forward kernels used by the model.
//!
//! The kernels here are pure functions of their inputs. The recording graph in
//! [`crate::autodiff`] calls them for the forward pass and pairs each with its
//! reverse-mode rule.

use thiserror::Error;

use crate::scalar::Scalar;

/// `sqrt(2 / pi)`, the slope constant of the tanh-form GELU.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh-form GELU.
pub const GELU_CUBIC: f64 = 0.044_715;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid parameter: {msg}")]
    Param { op: &'static str, msg: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense N-dimensional array.
///
/// `data.len()` always equals the product of `shape`; a shape of `[]` is a
/// scalar holding one element. `grad`, when present, has the same length as
/// `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::Param {
                op: "tensor",
                msg: format!("extents must be positive, got {shape:?}"),
            });
        }
        if numel(&shape) != data.len() {
            return Err(TensorError::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn full(shape: Vec<usize>, value: T) -> Self {
        let n = numel(&shape);
        Self::new(shape, vec![value; n]).expect("full: extents must be positive")
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub(crate) fn set_grad(&mut self, grad: Vec<T>) {
        debug_assert_eq!(grad.len(), self.data.len());
        self.grad = Some(grad);
    }

    /// Single element of a scalar-sized tensor.
    pub fn item(&self) -> Result<T> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(TensorError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Length of the last axis (1 for scalars).
    pub fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Converts to another precision. Gradient state is dropped.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
            grad: None,
        }
    }

    fn with_data(&self, shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::Param {
                op,
                msg: format!("expected a matrix, got shape {:?}", self.shape),
            }),
        }
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::Shape {
                op,
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        if numel(&shape) != self.data.len() || shape.contains(&0) {
            return Err(TensorError::Shape {
                op: "reshape",
                lhs: self.shape.clone(),
                rhs: shape,
            });
        }
        Ok(self.with_data(shape, self.data.clone()))
    }

    /// Standard matrix product `[m×k]·[k×p] -> [m×p]`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, p) = rhs.dims2("matmul")?;
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![T::zero(); m * p];
        for i in 0..m {
            let row = &mut out[i * p..(i + 1) * p];
            for kk in 0..k {
                let a = self.data[i * k + kk];
                if a == T::zero() {
                    continue;
                }
                let brow = &rhs.data[kk * p..(kk + 1) * p];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(self.with_data(vec![m, p], out))
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2("transpose")?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(self.with_data(vec![c, r], out))
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.same_shape(rhs, "add")?;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        Ok(self.with_data(self.shape.clone(), data))
    }

    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.same_shape(rhs, "mul")?;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a * b).collect();
        Ok(self.with_data(self.shape.clone(), data))
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// Adds a length-`d` vector to every row of a `[...×d]` tensor.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        let d = self.last_dim();
        if row.data.len() != d || row.last_dim() != d {
            return Err(TensorError::Shape {
                op: "add_row",
                lhs: self.shape.clone(),
                rhs: row.shape.clone(),
            });
        }
        let data = self
            .data
            .chunks(d)
            .flat_map(|chunk| chunk.iter().zip(&row.data).map(|(&a, &b)| a + b))
            .collect();
        Ok(self.with_data(self.shape.clone(), data))
    }

    pub fn sum(&self) -> Self {
        Self::scalar(self.data.iter().copied().sum())
    }

    /// Arithmetic mean over the last axis: `[...×L] -> [...×1]`.
    pub fn mean_last(&self) -> Self {
        let l = self.last_dim();
        let denom = T::of(l as f64);
        let data = self
            .data
            .chunks(l)
            .map(|row| row.iter().copied().sum::<T>() / denom)
            .collect();
        let mut shape = self.shape.clone();
        match shape.last_mut() {
            Some(last) => *last = 1,
            None => shape.push(1),
        }
        self.with_data(shape, data)
    }

    /// Tanh-form GELU: `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
    pub fn gelu(&self) -> Self {
        self.map(gelu_scalar)
    }

    /// Softmax along the last axis with max subtraction.
    pub fn softmax_rows(&self) -> Self {
        let d = self.last_dim();
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(d) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let start = data.len();
            let mut total = T::zero();
            for &v in row {
                let e = (v - max).exp();
                total = total + e;
                data.push(e);
            }
            for e in &mut data[start..] {
                *e = *e / total;
            }
        }
        self.with_data(self.shape.clone(), data)
    }

    /// Layer normalization over the last axis using the biased variance.
    pub fn layer_norm(&self, gain: &Self, bias: &Self, eps: T) -> Result<Self> {
        Ok(self.layer_norm_stats(gain, bias, eps)?.0)
    }

    /// Layer norm forward that also returns per-row `(mean, 1/sqrt(var+eps))`.
    pub(crate) fn layer_norm_stats(&self, gain: &Self, bias: &Self, eps: T) -> Result<(Self, Vec<(T, T)>)> {
        let d = self.last_dim();
        for p in [gain, bias] {
            if p.data.len() != d {
                return Err(TensorError::Shape {
                    op: "layer_norm",
                    lhs: self.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
        }
        let denom = T::of(d as f64);
        let mut data = Vec::with_capacity(self.data.len());
        let mut stats = Vec::with_capacity(self.data.len() / d);
        for row in self.data.chunks(d) {
            let mean = row.iter().copied().sum::<T>() / denom;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / denom;
            let rstd = T::one() / (var + eps).sqrt();
            for ((&v, &g), &b) in row.iter().zip(&gain.data).zip(&bias.data) {
                data.push((v - mean) * rstd * g + b);
            }
            stats.push((mean, rstd));
        }
        Ok((self.with_data(self.shape.clone(), data), stats))
    }

    /// Adaptive average pooling over the last axis, `[...×L] -> [...×P]`.
    ///
    /// Output cell `i` averages the input slice
    /// `[floor(i·L/P), ceil((i+1)·L/P))`.
    pub fn adaptive_avg_pool_1d(&self, out_size: usize) -> Result<Self> {
        let l = self.last_dim();
        if out_size < 1 || out_size > l {
            return Err(TensorError::Param {
                op: "adaptive_avg_pool_1d",
                msg: format!("output size {out_size} outside 1..={l}"),
            });
        }
        let bins = pool_bins(l, out_size);
        let mut data = Vec::with_capacity(self.data.len() / l * out_size);
        for row in self.data.chunks(l) {
            for &(start, end) in &bins {
                let width = T::of((end - start) as f64);
                data.push(row[start..end].iter().copied().sum::<T>() / width);
            }
        }
        let mut shape = self.shape.clone();
        match shape.last_mut() {
            Some(last) => *last = out_size,
            None => shape.push(out_size),
        }
        Ok(self.with_data(shape, data))
    }

    /// Columns `[start, end)` of a matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.dims2("slice_cols")?;
        if start >= end || end > c {
            return Err(TensorError::Param {
                op: "slice_cols",
                msg: format!("column range {start}..{end} outside 0..{c}"),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for row in self.data.chunks(c) {
            data.extend_from_slice(&row[start..end]);
        }
        Ok(self.with_data(vec![r, w], data))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| TensorError::Param {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let (r, _) = first.dims2("concat_cols")?;
        let mut total = 0;
        for p in parts {
            let (pr, pc) = p.dims2("concat_cols")?;
            if pr != r {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    lhs: first.shape.clone(),
                    rhs: p.shape.clone(),
                });
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                let pc = p.shape[1];
                data.extend_from_slice(&p.data[i * pc..(i + 1) * pc]);
            }
        }
        Ok(first.with_data(vec![r, total], data))
    }
}

/// Bin boundaries `[floor(i·L/P), ceil((i+1)·L/P))` of adaptive pooling.
pub fn pool_bins(len: usize, out_size: usize) -> Vec<(usize, usize)> {
    (0..out_size)
        .map(|i| (i * len / out_size, ((i + 1) * len).div_ceil(out_size)))
        .collect()
}

pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let inner = T::of(GELU_SQRT_2_OVER_PI) * (x + T::of(GELU_CUBIC) * x * x * x);
    half * x * (T::one() + inner.tanh())
}

/// Derivative of [`gelu_scalar`].
pub fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    let k = T::of(GELU_SQRT_2_OVER_PI);
    let c = T::of(GELU_CUBIC);
    let t = (k * (x + c * x * x * x)).tanh();
    let du = k * (T::one() + T::of(3.0) * c * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}
