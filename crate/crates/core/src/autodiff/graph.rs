//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and backward is a single reverse sweep.

use std::cell::RefCell;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy)]
enum Unary {
    Neg,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Gelu,
    Relu,
    Sqrt,
    Scale(f64),
    AddScalar(f64),
    Clip(f64, f64),
}

#[derive(Debug, Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
    Min,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Var, Unary),
    Binary(Var, Var, Binary),
    MatMul { a: Var, b: Var, shared_rhs: bool },
    SumAxis { a: Var, axis: usize },
    MeanAxis { a: Var, axis: usize },
    SumAll(Var),
    MeanAll(Var),
    Softmax(Var),
    LayerNorm { a: Var, inv_std: Vec<f64> },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { a: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
    param: Option<usize>,
    grad: Option<Vec<f64>>,
}

/// A computation graph. Build it with the op methods, then call
/// [`Graph::backward`] on a scalar result.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[inline(always)]
fn unary_forward(kind: Unary, x: f64) -> f64 {
    match kind {
        Unary::Neg => -x,
        Unary::Exp => x.exp(),
        Unary::Log => x.ln(),
        Unary::Sigmoid => sigmoid(x),
        Unary::Tanh => x.tanh(),
        Unary::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
        Unary::Relu => x.max(0.0),
        Unary::Sqrt => x.sqrt(),
        Unary::Scale(c) => c * x,
        Unary::AddScalar(c) => x + c,
        Unary::Clip(lo, hi) => x.clamp(lo, hi),
    }
}

/// d(out)/d(x) given input `x` and output `y`.
#[inline(always)]
fn unary_derivative(kind: Unary, x: f64, y: f64) -> f64 {
    match kind {
        Unary::Neg => -1.0,
        Unary::Exp => y,
        Unary::Log => 1.0 / x,
        Unary::Sigmoid => y * (1.0 - y),
        Unary::Tanh => 1.0 - y * y,
        Unary::Gelu => {
            let inner = GELU_C * (x + 0.044715 * x * x * x);
            let t = inner.tanh();
            let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        }
        Unary::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Unary::Sqrt => 0.5 / y,
        Unary::Scale(c) => c,
        Unary::AddScalar(_) => 1.0,
        Unary::Clip(lo, hi) => {
            if x >= lo && x <= hi {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Hoists the match on `kind` out of the element loop.
macro_rules! dispatch_unary {
    ($kind:expr, $call:ident, $($arg:expr),*) => {
        match $kind {
            Unary::Neg => $call($($arg,)* |x, _| unary_forward(Unary::Neg, x), |x, y| unary_derivative(Unary::Neg, x, y)),
            Unary::Exp => $call($($arg,)* |x, _| unary_forward(Unary::Exp, x), |x, y| unary_derivative(Unary::Exp, x, y)),
            Unary::Log => $call($($arg,)* |x, _| unary_forward(Unary::Log, x), |x, y| unary_derivative(Unary::Log, x, y)),
            Unary::Sigmoid => $call($($arg,)* |x, _| unary_forward(Unary::Sigmoid, x), |x, y| unary_derivative(Unary::Sigmoid, x, y)),
            Unary::Tanh => $call($($arg,)* |x, _| unary_forward(Unary::Tanh, x), |x, y| unary_derivative(Unary::Tanh, x, y)),
            Unary::Gelu => $call($($arg,)* |x, _| unary_forward(Unary::Gelu, x), |x, y| unary_derivative(Unary::Gelu, x, y)),
            Unary::Relu => $call($($arg,)* |x, _| unary_forward(Unary::Relu, x), |x, y| unary_derivative(Unary::Relu, x, y)),
            Unary::Sqrt => $call($($arg,)* |x, _| unary_forward(Unary::Sqrt, x), |x, y| unary_derivative(Unary::Sqrt, x, y)),
            k @ (Unary::Scale(_) | Unary::AddScalar(_) | Unary::Clip(..)) => {
                $call($($arg,)* move |x, _| unary_forward(k, x), move |x, y| unary_derivative(k, x, y))
            }
        }
    };
}

fn map_with<F: Fn(f64, f64) -> f64, D: Fn(f64, f64) -> f64>(xs: &[f64], f: F, _d: D) -> Vec<f64> {
    xs.iter().map(|&x| f(x, 0.0)).collect()
}

fn accumulate_with<F: Fn(f64, f64) -> f64, D: Fn(f64, f64) -> f64>(x: &[f64], y: &[f64], g: &[f64], acc: &mut [f64], _f: F, d: D) {
    for j in 0..g.len() {
        acc[j] += g[j] * d(x[j], y[j]);
    }
}

fn unary_map(kind: Unary, xs: &[f64]) -> Vec<f64> {
    dispatch_unary!(kind, map_with, xs)
}

fn unary_accumulate(kind: Unary, x: &[f64], y: &[f64], g: &[f64], acc: &mut [f64]) {
    dispatch_unary!(kind, accumulate_with, x, y, g, acc)
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c (m×n) = a (m×k) · b (k×n) [+ c]` with arbitrary strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
        assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
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

fn is_suffix(long: &[usize], short: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn slot(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    adj[v.0].get_or_insert_with(|| vec![0.0; len])
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
            param: None,
            grad: None,
        });
        Var(nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var {
        let (shape, data) = t.into_parts();
        self.push(shape, data, Op::Leaf, false)
    }

    /// Leaf tensor; receives a gradient when `t.is_trainable()`. An existing
    /// gradient on `t` is carried over and accumulated into.
    pub fn leaf(&self, t: Tensor) -> Var {
        let trainable = t.is_trainable();
        let grad = t.grad().map(<[f64]>::to_vec);
        let (shape, data) = t.into_parts();
        let v = self.push(shape, data, Op::Leaf, trainable);
        self.nodes.borrow_mut()[v.0].grad = grad;
        v
    }

    /// Trainable leaf bound to parameter slot `id` of a parameter store.
    pub fn param(&self, id: usize, t: &Tensor) -> Var {
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, true);
        self.nodes.borrow_mut()[v.0].param = Some(id);
        v
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].shape.clone()
    }

    pub fn data(&self, v: Var) -> Vec<f64> {
        self.nodes.borrow()[v.0].value.clone()
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes.borrow()[v.0].value[0]
    }

    pub fn value(&self, v: Var) -> Tensor {
        let nodes = self.nodes.borrow();
        let n = &nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a trainable leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<Vec<f64>> {
        self.nodes.borrow()[v.0].grad.clone()
    }

    /// `(parameter id, gradient)` for every bound parameter that received one.
    pub fn param_grads(&self) -> Vec<(usize, Vec<f64>)> {
        self.nodes
            .borrow()
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.clone()?)))
            .collect()
    }

    fn unary(&self, a: Var, kind: Unary) -> Var {
        let (shape, value, needs) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            let value = unary_map(kind, &n.value);
            (n.shape.clone(), value, n.needs_grad)
        };
        self.push(shape, value, Op::Unary(a, kind), needs)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.unary(a, Unary::Neg)
    }
    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Unary::Exp)
    }
    pub fn log(&self, a: Var) -> Var {
        self.unary(a, Unary::Log)
    }
    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, Unary::Sigmoid)
    }
    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Unary::Tanh)
    }
    /// GELU, tanh approximation.
    pub fn gelu(&self, a: Var) -> Var {
        self.unary(a, Unary::Gelu)
    }
    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }
    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(a, Unary::Sqrt)
    }
    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, Unary::Scale(c))
    }
    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        self.unary(a, Unary::AddScalar(c))
    }

    /// Clamp to `[lo, hi]`. The gradient passes through unchanged inside the
    /// interval and is zero outside it.
    pub fn clip(&self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Unary::Clip(lo, hi))
    }

    fn binary(&self, a: Var, b: Var, kind: Binary, name: &'static str) -> Result<Var> {
        let (shape, value, needs) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            let shape = if is_suffix(&na.shape, &nb.shape) {
                na.shape.clone()
            } else if is_suffix(&nb.shape, &na.shape) {
                nb.shape.clone()
            } else {
                return Err(Error::ShapeMismatch {
                    op: name,
                    lhs: na.shape.clone(),
                    rhs: nb.shape.clone(),
                });
            };
            let len: usize = shape.iter().product();
            let (va, vb) = (&na.value, &nb.value);
            let value = match kind {
                Binary::Add => broadcast_map(va, vb, len, |x, y| x + y),
                Binary::Sub => broadcast_map(va, vb, len, |x, y| x - y),
                Binary::Mul => broadcast_map(va, vb, len, |x, y| x * y),
                Binary::Div => broadcast_map(va, vb, len, |x, y| x / y),
                Binary::Min => broadcast_map(va, vb, len, f64::min),
            };
            (shape, value, na.needs_grad || nb.needs_grad)
        };
        Ok(self.push(shape, value, Op::Binary(a, b, kind), needs))
    }

    /// Elementwise sum. Either operand may broadcast when its shape is a
    /// trailing suffix of the other's (bias vectors, scalars).
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Add, "add")
    }
    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Sub, "sub")
    }
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Mul, "mul")
    }
    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Div, "div")
    }
    /// Elementwise minimum; on ties the gradient goes to `a`.
    pub fn minimum(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Binary::Min, "minimum")
    }

    /// `[.., m, k] × [k, n]` (shared right operand) or
    /// `[.., m, k] × [.., k, n]` (matching batch dimensions).
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (shape, value, shared_rhs, needs) = {
            let nodes = self.nodes.borrow();
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            let mismatch = || Error::ShapeMismatch {
                op: "matmul",
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            };
            let (ar, br) = (na.shape.len(), nb.shape.len());
            if ar < 2 || br < 2 {
                return Err(mismatch());
            }
            let (m, k) = (na.shape[ar - 2], na.shape[ar - 1]);
            let (kb, n) = (nb.shape[br - 2], nb.shape[br - 1]);
            if k != kb {
                return Err(mismatch());
            }
            let batch: usize = na.shape[..ar - 2].iter().product();
            let shared_rhs = br == 2;
            if !shared_rhs && nb.shape[..br - 2] != na.shape[..ar - 2] {
                return Err(mismatch());
            }
            let mut out = vec![0.0; batch * m * n];
            if shared_rhs {
                gemm(batch * m, k, n, &na.value, k, 1, &nb.value, n, 1, &mut out, false);
            } else {
                for bi in 0..batch {
                    gemm(
                        m,
                        k,
                        n,
                        &na.value[bi * m * k..],
                        k,
                        1,
                        &nb.value[bi * k * n..],
                        n,
                        1,
                        &mut out[bi * m * n..],
                        false,
                    );
                }
            }
            let mut shape = na.shape[..ar - 2].to_vec();
            shape.extend([m, n]);
            (shape, out, shared_rhs, na.needs_grad || nb.needs_grad)
        };
        Ok(self.push(shape, value, Op::MatMul { a, b, shared_rhs }, needs))
    }

    fn check_axis(&self, a: Var, axis: usize, op: &'static str) -> Result<Vec<usize>> {
        let shape = self.shape(a);
        if axis >= shape.len() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: shape,
                rhs: vec![axis],
            });
        }
        Ok(shape)
    }

    fn reduce_axis(&self, a: Var, axis: usize, mean: bool) -> Result<Var> {
        let name = if mean { "mean_axis" } else { "sum_axis" };
        let shape = self.check_axis(a, axis, name)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..len {
                    let src = &x[(o * len + j) * inner..(o * len + j + 1) * inner];
                    for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            if mean {
                let f = 1.0 / len as f64;
                out.iter_mut().for_each(|v| *v *= f);
            }
            (out, nodes[a.0].needs_grad)
        };
        let mut out_shape = shape;
        out_shape.remove(axis);
        let op = if mean {
            Op::MeanAxis { a, axis }
        } else {
            Op::SumAxis { a, axis }
        };
        Ok(self.push(out_shape, value, op, needs))
    }

    /// Sum over `axis`, dropping it.
    pub fn sum_axis(&self, a: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(a, axis, false)
    }

    /// Mean over `axis`, dropping it.
    pub fn mean_axis(&self, a: Var, axis: usize) -> Result<Var> {
        self.reduce_axis(a, axis, true)
    }

    pub fn sum(&self, a: Var) -> Var {
        let (v, needs) = {
            let nodes = self.nodes.borrow();
            (nodes[a.0].value.iter().sum::<f64>(), nodes[a.0].needs_grad)
        };
        self.push(vec![], vec![v], Op::SumAll(a), needs)
    }

    pub fn mean(&self, a: Var) -> Var {
        let (v, needs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            (x.iter().sum::<f64>() / x.len() as f64, nodes[a.0].needs_grad)
        };
        self.push(vec![], vec![v], Op::MeanAll(a), needs)
    }

    /// Softmax over the last axis.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let shape = self.check_axis(a, self.shape(a).len().saturating_sub(1), "softmax")?;
        let last = *shape.last().unwrap();
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = x.clone();
            if last > 0 {
                for row in out.chunks_mut(last) {
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        z += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= z);
                }
            }
            (out, nodes[a.0].needs_grad)
        };
        Ok(self.push(shape, value, Op::Softmax(a), needs))
    }

    /// Normalise each row over the last axis to zero mean and unit (biased)
    /// variance. No affine rescale.
    pub fn layer_norm(&self, a: Var, eps: f64) -> Result<Var> {
        let shape = self.check_axis(a, self.shape(a).len().saturating_sub(1), "layer_norm")?;
        let last = *shape.last().unwrap();
        let (value, inv_std, needs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = x.clone();
            let mut inv_std = Vec::with_capacity(x.len() / last.max(1));
            if last > 0 {
                for row in out.chunks_mut(last) {
                    let mu = row.iter().sum::<f64>() / last as f64;
                    let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / last as f64;
                    let is = 1.0 / (var + eps).sqrt();
                    row.iter_mut().for_each(|v| *v = (*v - mu) * is);
                    inv_std.push(is);
                }
            }
            (out, inv_std, nodes[a.0].needs_grad)
        };
        Ok(self.push(shape, value, Op::LayerNorm { a, inv_std }, needs))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("concat of zero tensors".into()))?;
        let base = self.check_axis(*first, axis, "concat")?;
        let (value, shape, needs) = {
            let nodes = self.nodes.borrow();
            let mut total = 0;
            let mut needs = false;
            for p in parts {
                let s = &nodes[p.0].shape;
                let ok = s.len() == base.len()
                    && s.iter()
                        .zip(&base)
                        .enumerate()
                        .all(|(i, (x, y))| i == axis || x == y);
                if !ok {
                    return Err(Error::ShapeMismatch {
                        op: "concat",
                        lhs: base.clone(),
                        rhs: s.clone(),
                    });
                }
                total += s[axis];
                needs |= nodes[p.0].needs_grad;
            }
            let mut shape = base.clone();
            shape[axis] = total;
            let (outer, _, inner) = split_axis(&shape, axis);
            let mut out = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for p in parts {
                    let n = &nodes[p.0];
                    let chunk = n.shape[axis] * inner;
                    out.extend_from_slice(&n.value[o * chunk..(o + 1) * chunk]);
                }
            }
            (out, shape, needs)
        };
        Ok(self.push(
            shape,
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.check_axis(a, axis, "slice")?;
        if start > end || end > shape[axis] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                lhs: shape,
                rhs: vec![start, end],
            });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = Vec::with_capacity(outer * (end - start) * inner);
            for o in 0..outer {
                out.extend_from_slice(&x[(o * len + start) * inner..(o * len + end) * inner]);
            }
            (out, nodes[a.0].needs_grad)
        };
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        Ok(self.push(out_shape, value, Op::Slice { a, axis, start }, needs))
    }

    /// Swap the last two axes.
    pub fn transpose(&self, a: Var) -> Result<Var> {
        let shape = self.shape(a);
        let r = shape.len();
        if r < 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                lhs: shape,
                rhs: vec![],
            });
        }
        let (m, n) = (shape[r - 2], shape[r - 1]);
        let (value, needs) = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let mut out = vec![0.0; x.len()];
            transpose_into(x, &mut out, m, n);
            (out, nodes[a.0].needs_grad)
        };
        let mut out_shape = shape;
        out_shape.swap(r - 2, r - 1);
        Ok(self.push(out_shape, value, Op::Transpose(a), needs))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let (value, needs, old) = {
            let nodes = self.nodes.borrow();
            let n = &nodes[a.0];
            (n.value.clone(), n.needs_grad, n.shape.clone())
        };
        if shape.iter().product::<usize>() != value.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: old,
                rhs: shape.to_vec(),
            });
        }
        Ok(self.push(shape.to_vec(), value, Op::Reshape(a), needs))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of trainable leaves are
    /// accumulated, so calling this twice doubles them.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let leaf_updates = {
            let nodes = self.nodes.borrow();
            let ln = &nodes[loss.0];
            if ln.value.len() != 1 {
                return Err(Error::NonScalarLoss(ln.shape.clone()));
            }
            let mut adj: Vec<Option<Vec<f64>>> = Vec::new();
            adj.resize_with(loss.0 + 1, || None);
            adj[loss.0] = Some(vec![1.0]);
            let mut leaf_updates = Vec::new();
            for i in (0..=loss.0).rev() {
                let Some(g) = adj[i].take() else { continue };
                if !nodes[i].needs_grad {
                    continue;
                }
                if let Op::Leaf = nodes[i].op {
                    leaf_updates.push((i, g));
                } else {
                    backprop(&nodes, i, &g, &mut adj);
                }
            }
            leaf_updates
        };
        let mut nodes = self.nodes.borrow_mut();
        for (i, g) in leaf_updates {
            match &mut nodes[i].grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }
}

/// Elementwise `f` where the shorter operand repeats over the longer one
/// (its shape is a trailing suffix, so its length divides `len`).
fn broadcast_map<F: Fn(f64, f64) -> f64>(va: &[f64], vb: &[f64], len: usize, f: F) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if va.len() == len && vb.len() == len {
        out.extend(va.iter().zip(vb).map(|(&x, &y)| f(x, y)));
    } else if va.len() == len {
        for chunk in va.chunks(vb.len()) {
            out.extend(chunk.iter().zip(vb).map(|(&x, &y)| f(x, y)));
        }
    } else {
        for chunk in vb.chunks(va.len()) {
            out.extend(va.iter().zip(chunk).map(|(&x, &y)| f(x, y)));
        }
    }
    out
}

/// Accumulate `g * d(x, y)` into the gradient of one operand, summing over
/// the repeats when that operand was broadcast.
fn broadcast_accumulate<F: Fn(f64, f64) -> f64>(
    va: &[f64],
    vb: &[f64],
    g: &[f64],
    acc: &mut [f64],
    lhs: bool,
    d: F,
) {
    let len = g.len();
    let (la, lb) = (va.len(), vb.len());
    if la == len && lb == len {
        for j in 0..len {
            acc[j] += g[j] * d(va[j], vb[j]);
        }
    } else if la == len {
        for (c, (xa, gc)) in va.chunks(lb).zip(g.chunks(lb)).enumerate() {
            for j in 0..lb {
                let v = gc[j] * d(xa[j], vb[j]);
                if lhs {
                    acc[c * lb + j] += v;
                } else {
                    acc[j] += v;
                }
            }
        }
    } else {
        for (c, (yb, gc)) in vb.chunks(la).zip(g.chunks(la)).enumerate() {
            for j in 0..la {
                let v = gc[j] * d(va[j], yb[j]);
                if lhs {
                    acc[j] += v;
                } else {
                    acc[c * la + j] += v;
                }
            }
        }
    }
}

fn transpose_into(x: &[f64], out: &mut [f64], m: usize, n: usize) {
    let block = m * n;
    if block == 0 {
        return;
    }
    for (src, dst) in x.chunks(block).zip(out.chunks_mut(block)) {
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
}

fn backprop(nodes: &[Node], i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::Unary(a, kind) => {
            let x = &nodes[a.0].value;
            let ga = slot(adj, *a, x.len());
            unary_accumulate(*kind, x, &node.value, g, ga);
        }
        Op::Binary(a, b, kind) => {
            let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
            let (la, lb) = (va.len(), vb.len());
            if nodes[a.0].needs_grad {
                let ga = slot(adj, *a, la);
                // d(x op y)/dx; on ties `minimum` routes the gradient to x
                match kind {
                    Binary::Add | Binary::Sub => broadcast_accumulate(va, vb, g, ga, true, |_, _| 1.0),
                    Binary::Mul => broadcast_accumulate(va, vb, g, ga, true, |_, y| y),
                    Binary::Div => broadcast_accumulate(va, vb, g, ga, true, |_, y| 1.0 / y),
                    Binary::Min => broadcast_accumulate(va, vb, g, ga, true, |x, y| f64::from(u8::from(x <= y))),
                }
            }
            if nodes[b.0].needs_grad {
                let gb = slot(adj, *b, lb);
                match kind {
                    Binary::Add => broadcast_accumulate(va, vb, g, gb, false, |_, _| 1.0),
                    Binary::Sub => broadcast_accumulate(va, vb, g, gb, false, |_, _| -1.0),
                    Binary::Mul => broadcast_accumulate(va, vb, g, gb, false, |x, _| x),
                    Binary::Div => broadcast_accumulate(va, vb, g, gb, false, |x, y| -x / (y * y)),
                    Binary::Min => broadcast_accumulate(va, vb, g, gb, false, |x, y| f64::from(u8::from(x > y))),
                }
            }
        }
        Op::MatMul { a, b, shared_rhs } => {
            let (na, nb) = (&nodes[a.0], &nodes[b.0]);
            let ar = na.shape.len();
            let (m, k) = (na.shape[ar - 2], na.shape[ar - 1]);
            let n = nb.shape[nb.shape.len() - 1];
            let batch: usize = na.shape[..ar - 2].iter().product();
            if *shared_rhs {
                if na.needs_grad {
                    let ga = slot(adj, *a, na.value.len());
                    // dA = dC · Bᵀ
                    gemm(batch * m, n, k, g, n, 1, &nb.value, 1, n, ga, true);
                }
                if nb.needs_grad {
                    let gb = slot(adj, *b, nb.value.len());
                    // dB = Aᵀ · dC
                    gemm(k, batch * m, n, &na.value, 1, k, g, n, 1, gb, true);
                }
            } else {
                if na.needs_grad {
                    let ga = slot(adj, *a, na.value.len());
                    for bi in 0..batch {
                        gemm(
                            m,
                            n,
                            k,
                            &g[bi * m * n..],
                            n,
                            1,
                            &nb.value[bi * k * n..],
                            1,
                            n,
                            &mut ga[bi * m * k..],
                            true,
                        );
                    }
                }
                if nb.needs_grad {
                    let gb = slot(adj, *b, nb.value.len());
                    for bi in 0..batch {
                        gemm(
                            k,
                            m,
                            n,
                            &na.value[bi * m * k..],
                            1,
                            k,
                            &g[bi * m * n..],
                            n,
                            1,
                            &mut gb[bi * k * n..],
                            true,
                        );
                    }
                }
            }
        }
        Op::SumAxis { a, axis } | Op::MeanAxis { a, axis } => {
            let shape = &nodes[a.0].shape;
            let (outer, len, inner) = split_axis(shape, *axis);
            let f = if matches!(node.op, Op::MeanAxis { .. }) {
                1.0 / len as f64
            } else {
                1.0
            };
            let ga = slot(adj, *a, outer * len * inner);
            for o in 0..outer {
                let src = &g[o * inner..(o + 1) * inner];
                for j in 0..len {
                    let dst = &mut ga[(o * len + j) * inner..(o * len + j + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += f * s;
                    }
                }
            }
        }
        Op::SumAll(a) | Op::MeanAll(a) => {
            let len = nodes[a.0].value.len();
            let f = if matches!(node.op, Op::MeanAll(_)) {
                g[0] / len as f64
            } else {
                g[0]
            };
            slot(adj, *a, len).iter_mut().for_each(|v| *v += f);
        }
        Op::Softmax(a) => {
            let last = *node.shape.last().unwrap();
            let ga = slot(adj, *a, node.value.len());
            for ((y, gy), gx) in node
                .value
                .chunks(last)
                .zip(g.chunks(last))
                .zip(ga.chunks_mut(last))
            {
                let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                for j in 0..last {
                    gx[j] += y[j] * (gy[j] - dot);
                }
            }
        }
        Op::LayerNorm { a, inv_std } => {
            let last = *node.shape.last().unwrap();
            let ga = slot(adj, *a, node.value.len());
            for (r, ((y, gy), gx)) in node
                .value
                .chunks(last)
                .zip(g.chunks(last))
                .zip(ga.chunks_mut(last))
                .enumerate()
            {
                let mean_g = gy.iter().sum::<f64>() / last as f64;
                let mean_gy = y.iter().zip(gy).map(|(a, b)| a * b).sum::<f64>() / last as f64;
                for j in 0..last {
                    gx[j] += inv_std[r] * (gy[j] - mean_g - y[j] * mean_gy);
                }
            }
        }
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = split_axis(&node.shape, *axis);
            let mut offset = 0;
            for p in parts {
                let pn = &nodes[p.0];
                let width = pn.shape[*axis];
                if pn.needs_grad {
                    let gp = slot(adj, *p, pn.value.len());
                    let chunk = width * inner;
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset) * inner + chunk];
                        for (d, s) in gp[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                offset += width;
            }
        }
        Op::Slice { a, axis, start } => {
            let shape = &nodes[a.0].shape;
            let (outer, len, inner) = split_axis(shape, *axis);
            let width = node.shape[*axis];
            let ga = slot(adj, *a, outer * len * inner);
            for o in 0..outer {
                let dst = &mut ga[(o * len + start) * inner..(o * len + start + width) * inner];
                for (d, s) in dst.iter_mut().zip(&g[o * width * inner..(o + 1) * width * inner]) {
                    *d += s;
                }
            }
        }
        Op::Transpose(a) => {
            let r = node.shape.len();
            let (n, m) = (node.shape[r - 2], node.shape[r - 1]);
            let mut t = vec![0.0; g.len()];
            transpose_into(g, &mut t, n, m);
            let ga = slot(adj, *a, g.len());
            ga.iter_mut().zip(&t).for_each(|(d, s)| *d += s);
        }
        Op::Reshape(a) => {
            let ga = slot(adj, *a, g.len());
            ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
        }
    }
}
