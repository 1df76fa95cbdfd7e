//! Elementwise math, reductions and channel plumbing.

use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{Backward, Tensor};

/// Negative-side slope used by the dense blocks unless configured otherwise.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind {
    Neg,
    Exp,
    Sigmoid,
    /// Leaky rectifier with the given negative slope.
    LeakyRelu(f64),
    Abs,
    Square,
    /// Multiply by a constant.
    Scale(f64),
    /// Add a constant.
    Offset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl UnaryKind {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            UnaryKind::Neg => -x,
            UnaryKind::Exp => x.exp(),
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::LeakyRelu(slope) => {
                if x >= T::zero() {
                    x
                } else {
                    x * T::of(slope)
                }
            }
            UnaryKind::Abs => x.abs(),
            UnaryKind::Square => x * x,
            UnaryKind::Scale(c) => x * T::of(c),
            UnaryKind::Offset(c) => x + T::of(c),
        }
    }

    /// d(out)/d(in) given input `x` and output `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            UnaryKind::Neg => -T::one(),
            UnaryKind::Exp => y,
            UnaryKind::Sigmoid => y * (T::one() - y),
            UnaryKind::LeakyRelu(slope) => {
                if x >= T::zero() {
                    T::one()
                } else {
                    T::of(slope)
                }
            }
            UnaryKind::Abs => {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            UnaryKind::Square => x + x,
            UnaryKind::Scale(c) => T::of(c),
            UnaryKind::Offset(_) => T::one(),
        }
    }
}

struct UnaryRule(UnaryKind);

impl<T: Real> Backward<T> for UnaryRule {
    fn backward(&self, parents: &[Tensor<T>], output: &Array<T>, grad: &Array<T>, _: &[bool]) -> Vec<Option<Array<T>>> {
        let input = parents[0].data();
        let out = output.data();
        let g = Array::from_fn(grad.shape().to_vec(), |i| {
            grad.data()[i] * self.0.derivative(input[i], out[i])
        });
        vec![Some(g)]
    }
}

#[inline]
fn at<T: Real>(x: &Array<T>, i: usize) -> T {
    if x.numel() == 1 {
        x.data()[0]
    } else {
        x.data()[i]
    }
}

/// Collapses a full-size gradient onto a broadcast scalar operand.
fn reduce_to<T: Real>(g: Array<T>, target: &Array<T>) -> Array<T> {
    if target.numel() == 1 && g.numel() != 1 {
        let total: f64 = g.data().iter().map(|v| v.as_f64()).sum();
        Array::full(target.shape().to_vec(), T::of(total))
    } else {
        g
    }
}

struct BinaryRule(BinaryKind);

impl<T: Real> Backward<T> for BinaryRule {
    fn backward(&self, parents: &[Tensor<T>], _: &Array<T>, grad: &Array<T>, needs: &[bool]) -> Vec<Option<Array<T>>> {
        let (a, b) = (parents[0].value(), parents[1].value());
        let shape = grad.shape().to_vec();
        let g = grad.data();
        let ga = needs[0].then(|| {
            let full = match self.0 {
                BinaryKind::Add | BinaryKind::Sub => grad.clone(),
                BinaryKind::Mul => Array::from_fn(shape.clone(), |i| g[i] * at(b, i)),
            };
            reduce_to(full, a)
        });
        let gb = needs[1].then(|| {
            let full = match self.0 {
                BinaryKind::Add => grad.clone(),
                BinaryKind::Sub => grad.map(|v| -v),
                BinaryKind::Mul => Array::from_fn(shape.clone(), |i| g[i] * at(a, i)),
            };
            reduce_to(full, b)
        });
        vec![ga, gb]
    }
}

struct SumRule {
    scale: f64,
}

impl<T: Real> Backward<T> for SumRule {
    fn backward(&self, parents: &[Tensor<T>], _: &Array<T>, grad: &Array<T>, _: &[bool]) -> Vec<Option<Array<T>>> {
        let g = grad.data()[0] * T::of(self.scale);
        vec![Some(Array::full(parents[0].shape().to_vec(), g))]
    }
}

/// Channel concatenation of `[N, C_i, H, W]` tensors.
struct ConcatRule {
    channels: Vec<usize>,
}

impl<T: Real> Backward<T> for ConcatRule {
    fn backward(&self, _: &[Tensor<T>], _: &Array<T>, grad: &Array<T>, needs: &[bool]) -> Vec<Option<Array<T>>> {
        let [n, c_total, h, w] = grad.dims4("concat").expect("rank checked in forward");
        let plane = h * w;
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.channels.len());
        for (&c, &need) in self.channels.iter().zip(needs) {
            if need {
                let mut g = Vec::with_capacity(n * c * plane);
                for b in 0..n {
                    let start = (b * c_total + offset) * plane;
                    g.extend_from_slice(&grad.data()[start..start + c * plane]);
                }
                out.push(Some(Array::new([n, c, h, w], g).expect("sizes consistent")));
            } else {
                out.push(None);
            }
            offset += c;
        }
        out
    }
}

struct ExpandBatchRule;

impl<T: Real> Backward<T> for ExpandBatchRule {
    fn backward(&self, parents: &[Tensor<T>], _: &Array<T>, grad: &Array<T>, _: &[bool]) -> Vec<Option<Array<T>>> {
        let per = parents[0].numel();
        let mut g = vec![T::zero(); per];
        for chunk in grad.data().chunks(per) {
            for (acc, v) in g.iter_mut().zip(chunk) {
                *acc += *v;
            }
        }
        vec![Some(Array::new(parents[0].shape().to_vec(), g).expect("same shape"))]
    }
}

fn same_shape_or_scalar<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<usize>> {
    if a.shape() == b.shape() || b.numel() == 1 {
        return Ok(a.shape().to_vec());
    }
    if a.numel() == 1 {
        return Ok(b.shape().to_vec());
    }
    if a.shape().len() != b.shape().len() {
        return Err(TensorError::RankMismatch {
            op,
            expected: a.shape().len(),
            found: b.shape().len(),
        });
    }
    let dim = a
        .shape()
        .iter()
        .zip(b.shape())
        .position(|(x, y)| x != y)
        .expect("shapes differ");
    Err(TensorError::ShapeMismatch {
        op,
        dim,
        expected: a.shape()[dim],
        found: b.shape()[dim],
    })
}

impl<T: Real> Tensor<T> {
    pub fn unary(&self, kind: UnaryKind) -> Tensor<T> {
        let value = self.value().map(|v| kind.apply(v));
        Tensor::from_op(value, vec![self.clone()], UnaryRule(kind))
    }

    /// Equal shapes, or either side holding a single element (scalar broadcast).
    pub fn binary(&self, kind: BinaryKind, other: &Tensor<T>) -> Result<Tensor<T>> {
        let op = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let shape = same_shape_or_scalar(op, self, other)?;
        let (a, b) = (self.value(), other.value());
        let value = Array::from_fn(shape, |i| {
            let (x, y) = (at(a, i), at(b, i));
            match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
            }
        });
        Ok(Tensor::from_op(value, vec![self.clone(), other.clone()], BinaryRule(kind)))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Add, other)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Sub, other)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(BinaryKind::Mul, other)
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary(UnaryKind::Neg)
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary(UnaryKind::Exp)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(UnaryKind::Sigmoid)
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<T> {
        self.unary(UnaryKind::LeakyRelu(slope))
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary(UnaryKind::Abs)
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary(UnaryKind::Square)
    }

    pub fn scale(&self, c: f64) -> Tensor<T> {
        self.unary(UnaryKind::Scale(c))
    }

    pub fn offset(&self, c: f64) -> Tensor<T> {
        self.unary(UnaryKind::Offset(c))
    }

    /// Sum of all elements as a rank-0 tensor (accumulated in f64).
    pub fn sum(&self) -> Tensor<T> {
        let total: f64 = self.data().iter().map(|v| v.as_f64()).sum();
        Tensor::from_op(Array::scalar(T::of(total)), vec![self.clone()], SumRule { scale: 1.0 })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel().max(1) as f64;
        let total: f64 = self.data().iter().map(|v| v.as_f64()).sum();
        Tensor::from_op(
            Array::scalar(T::of(total / n)),
            vec![self.clone()],
            SumRule { scale: 1.0 / n },
        )
    }

    /// Repeats a `[1, C, H, W]` tensor `n` times along the batch axis.
    pub fn expand_batch(&self, n: usize) -> Result<Tensor<T>> {
        let [b, c, h, w] = self.value().dims4("expand_batch")?;
        if b != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "expand_batch",
                dim: 0,
                expected: 1,
                found: b,
            });
        }
        let mut data = Vec::with_capacity(n * self.numel());
        for _ in 0..n {
            data.extend_from_slice(self.data());
        }
        let value = Array::new([n, c, h, w], data)?;
        Ok(Tensor::from_op(value, vec![self.clone()], ExpandBatchRule))
    }
}

/// Concatenates `[N, C_i, H, W]` tensors along the channel axis.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or(TensorError::InvalidArgument {
        op: "concat_channels",
        reason: "no inputs".into(),
    })?;
    let [n, _, h, w] = first.value().dims4("concat_channels")?;
    let mut channels = Vec::with_capacity(parts.len());
    for p in parts {
        let [pn, pc, ph, pw] = p.value().dims4("concat_channels")?;
        for (dim, (want, got)) in [(0, (n, pn)), (2, (h, ph)), (3, (w, pw))] {
            if want != got {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    dim,
                    expected: want,
                    found: got,
                });
            }
        }
        channels.push(pc);
    }
    let c_total: usize = channels.iter().sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * c_total * plane);
    for b in 0..n {
        for (p, &c) in parts.iter().zip(&channels) {
            let start = b * c * plane;
            data.extend_from_slice(&p.data()[start..start + c * plane]);
        }
    }
    let value = Array::new([n, c_total, h, w], data)?;
    Ok(Tensor::from_op(
        value,
        parts.iter().map(|p| (*p).clone()).collect(),
        ConcatRule { channels },
    ))
}
