use super::kernels::{self, split_axis};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    MatMul(Var, Var),
    Bmm(Var, Var),
    TransposeLast2(Var),
    Concat(Vec<Var>, usize),
    Narrow {
        input: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Sum(Var),
    Mean(Var),
    BroadcastAxis {
        input: Var,
        axis: usize,
        n: usize,
    },
    Reshape(Var, Vec<usize>),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    SoftmaxLast(Var),
    L2NormalizeLast(Var, f64),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Bmm(..) => "bmm",
            Op::TransposeLast2(..) => "transpose_last2",
            Op::Concat(..) => "concat",
            Op::Narrow { .. } => "narrow",
            Op::SumAxis(..) => "sum_axis",
            Op::MeanAxis(..) => "mean_axis",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::BroadcastAxis { .. } => "broadcast_axis",
            Op::Reshape(..) => "reshape",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Abs(..) => "abs",
            Op::Clamp(..) => "clamp",
            Op::SoftmaxLast(..) => "softmax_last",
            Op::L2NormalizeLast(..) => "l2_normalize_last",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) | Op::Bmm(a, b) => {
                vec![*a, *b]
            }
            Op::Concat(parts, _) => parts.clone(),
            Op::Narrow { input, .. } | Op::BroadcastAxis { input, .. } => vec![*input],
            Op::Scale(a, _)
            | Op::AddScalar(a, _)
            | Op::TransposeLast2(a)
            | Op::SumAxis(a, _)
            | Op::MeanAxis(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Abs(a)
            | Op::Clamp(a, ..)
            | Op::SoftmaxLast(a)
            | Op::L2NormalizeLast(a, _) => vec![*a],
        }
    }
}

/// Computes an op's output from its input values.
fn eval(op: &Op, xs: &[&Tensor]) -> Result<Tensor> {
    let out = match op {
        Op::Leaf => unreachable!("leaves carry their own value"),
        Op::Add(..) => kernels::zip_same("add", xs[0], xs[1], |a, b| a + b)?,
        Op::Sub(..) => kernels::zip_same("sub", xs[0], xs[1], |a, b| a - b)?,
        Op::Mul(..) => kernels::zip_same("mul", xs[0], xs[1], |a, b| a * b)?,
        Op::Div(..) => kernels::zip_same("div", xs[0], xs[1], |a, b| a / b)?,
        Op::Scale(_, s) => kernels::map(xs[0], |a| a * s),
        Op::AddScalar(_, s) => kernels::map(xs[0], |a| a + s),
        Op::MatMul(..) => kernels::matmul(xs[0], xs[1])?,
        Op::Bmm(..) => kernels::bmm(xs[0], xs[1])?,
        Op::TransposeLast2(_) => kernels::transpose_last2(xs[0])?,
        Op::Concat(_, axis) => kernels::concat(xs, *axis)?,
        Op::Narrow {
            axis, start, len, ..
        } => kernels::narrow(xs[0], *axis, *start, *len)?,
        Op::SumAxis(_, axis) => kernels::sum_axis(xs[0], *axis)?,
        Op::MeanAxis(_, axis) => {
            let n = xs[0].shape()[*axis] as f64;
            kernels::map(&kernels::sum_axis(xs[0], *axis)?, |v| v / n)
        }
        Op::Sum(_) => Tensor::scalar(xs[0].data().iter().sum()),
        Op::Mean(_) => Tensor::scalar(xs[0].data().iter().sum::<f64>() / xs[0].numel() as f64),
        Op::BroadcastAxis { axis, n, .. } => kernels::broadcast_axis(xs[0], *axis, *n)?,
        Op::Reshape(_, shape) => xs[0].reshape(shape.clone())?,
        Op::Relu(_) => kernels::map(xs[0], |a| if a > 0.0 { a } else { 0.0 }),
        Op::Sigmoid(_) => kernels::map(xs[0], sigmoid),
        Op::Exp(_) => kernels::map(xs[0], f64::exp),
        Op::Log(_) => kernels::map(xs[0], f64::ln),
        Op::Sqrt(_) => kernels::map(xs[0], f64::sqrt),
        Op::Abs(_) => kernels::map(xs[0], f64::abs),
        Op::Clamp(_, lo, hi) => kernels::map(xs[0], |a| a.clamp(*lo, *hi)),
        Op::SoftmaxLast(_) => {
            if xs[0].rank() == 0 {
                return Err(Error::InvalidTensor("softmax_last needs rank >= 1".into()));
            }
            kernels::softmax_last(xs[0])
        }
        Op::L2NormalizeLast(_, eps) => {
            if xs[0].rank() == 0 {
                return Err(Error::InvalidTensor(
                    "l2_normalize_last needs rank >= 1".into(),
                ));
            }
            kernels::l2_normalize_last(xs[0], *eps).0
        }
    };
    Ok(out)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// A tape of primitive applications, recorded in topological order.
///
/// Values are computed eagerly as ops are recorded. A graph is meant to be
/// used by a single thread; independent graphs can run concurrently.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a node that requires grad. Leaves off the loss path get zeros.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let inputs = op.inputs();
        let value = {
            let xs: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            eval(&op, &xs)?
        };
        let node = self.nodes.len();
        if value.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: op.name(),
                node,
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(node))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.record(Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.record(Op::AddScalar(a, s))
    }

    /// `[..., N] x [N, P] -> [..., P]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::MatMul(a, b))
    }

    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        self.record(Op::Bmm(a, b))
    }

    pub fn transpose_last2(&mut self, a: Var) -> Result<Var> {
        self.record(Op::TransposeLast2(a))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        self.record(Op::Concat(parts.to_vec(), axis))
    }

    pub fn narrow(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.record(Op::Narrow {
            input,
            axis,
            start,
            len,
        })
    }

    /// Splits the last axis into consecutive pieces of the given sizes.
    pub fn split_last(&mut self, input: Var, sizes: &[usize]) -> Result<Vec<Var>> {
        let axis = self.shape(input).len().checked_sub(1).ok_or_else(|| {
            Error::InvalidTensor("split_last on a rank-0 tensor".into())
        })?;
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &len in sizes {
            out.push(self.narrow(input, axis, start, len)?);
            start += len;
        }
        if start != self.shape(input)[axis] {
            return Err(Error::InvalidTensor(format!(
                "split sizes {sizes:?} do not cover extent {}",
                self.shape(input)[axis]
            )));
        }
        Ok(out)
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.record(Op::SumAxis(a, axis))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.record(Op::MeanAxis(a, axis))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Mean(a))
    }

    /// Inserts a new axis of extent `n` at position `axis`.
    pub fn broadcast_axis(&mut self, input: Var, axis: usize, n: usize) -> Result<Var> {
        self.record(Op::BroadcastAxis { input, axis, n })
    }

    /// Prepends `leading` axes, e.g. a bias `[P]` to `[T, K, P]`.
    pub fn expand_leading(&mut self, input: Var, leading: &[usize]) -> Result<Var> {
        let mut v = input;
        for &n in leading.iter().rev() {
            v = self.broadcast_axis(v, 0, n)?;
        }
        Ok(v)
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.record(Op::Reshape(a, shape.into()))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Log(a))
    }

    /// Elementwise square root. Its derivative is unbounded at 0, so callers clamp first.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.record(Op::Abs(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.record(Op::Clamp(a, lo, hi))
    }

    pub fn softmax_last(&mut self, a: Var) -> Result<Var> {
        self.record(Op::SoftmaxLast(a))
    }

    pub fn l2_normalize_last(&mut self, a: Var, eps: f64) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps must be positive, got {eps}")));
        }
        self.record(Op::L2NormalizeLast(a, eps))
    }

    /// Cosine similarity over the last axis, `[.., d] x [.., d] -> [..]`.
    ///
    /// Computed as `dot / sqrt(max(|a|^2 |b|^2, eps^2))`, so identical inputs
    /// give exactly 1 and zero vectors give 0. The result is clamped into
    /// `[-1, 1]` against rounding.
    pub fn cosine_last(&mut self, a: Var, b: Var, eps: f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) || self.shape(a).is_empty() {
            return Err(Error::Shape {
                op: "cosine_last",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let axis = self.shape(a).len() - 1;
        let ab = self.mul(a, b)?;
        let dot = self.sum_axis(ab, axis)?;
        let aa = self.mul(a, a)?;
        let na = self.sum_axis(aa, axis)?;
        let bb = self.mul(b, b)?;
        let nb = self.sum_axis(bb, axis)?;
        let prod = self.mul(na, nb)?;
        let floor = self.clamp(prod, eps * eps, f64::MAX)?;
        let den = self.sqrt(floor)?;
        let cos = self.div(dot, den)?;
        self.clamp(cos, -1.0, 1.0)
    }

    /// Recomputes every node from the recorded leaves.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                op => {
                    let xs: Vec<&Tensor> = op.inputs().iter().map(|v| &values[v.0]).collect();
                    eval(op, &xs)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::NotScalar(loss_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(dy);
                continue;
            }
            for (input, dx) in self.adjoint(node, &dy) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&dx).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(dx),
                }
            }
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, node.requires_grad) {
                (Op::Leaf, true) => Some(match g {
                    Some(data) => Tensor::from_parts(node.value.shape().to_vec(), data),
                    None => Tensor::zeros_like(&node.value),
                }),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Vector-Jacobian products of `node` for upstream gradient `dy`.
    fn adjoint(&self, node: &Node, dy: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) => vec![(*a, dy.to_vec()), (*b, dy.to_vec())],
            Op::Sub(a, b) => vec![(*a, dy.to_vec()), (*b, dy.iter().map(|g| -g).collect())],
            Op::Mul(a, b) => {
                let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                vec![
                    (*a, dy.iter().zip(bv).map(|(g, x)| g * x).collect()),
                    (*b, dy.iter().zip(av).map(|(g, x)| g * x).collect()),
                ]
            }
            Op::Div(a, b) => {
                let bv = self.val(*b).data();
                vec![
                    (*a, dy.iter().zip(bv).map(|(g, x)| g / x).collect()),
                    (*b, dy.iter().zip(bv).zip(y.data()).map(|((g, x), q)| -g * q / x).collect()),
                ]
            }
            Op::Scale(a, s) => vec![(*a, dy.iter().map(|g| g * s).collect())],
            Op::AddScalar(a, _) => vec![(*a, dy.to_vec())],
            Op::MatMul(a, b) => {
                let (at, bt) = (self.val(*a), self.val(*b));
                let (n, p) = (bt.shape()[0], bt.shape()[1]);
                let rows = at.numel() / n;
                vec![
                    (*a, kernels::gemm_nt(dy, bt.data(), rows, p, n)),
                    (*b, kernels::gemm_tn(at.data(), dy, rows, n, p)),
                ]
            }
            Op::Bmm(a, b) => {
                let (at, bt) = (self.val(*a), self.val(*b));
                let (batch, m, n, p) = (at.shape()[0], at.shape()[1], at.shape()[2], bt.shape()[2]);
                let mut da = Vec::with_capacity(batch * m * n);
                let mut db = Vec::with_capacity(batch * n * p);
                for i in 0..batch {
                    let g = &dy[i * m * p..(i + 1) * m * p];
                    let ai = &at.data()[i * m * n..(i + 1) * m * n];
                    let bi = &bt.data()[i * n * p..(i + 1) * n * p];
                    da.extend(kernels::gemm_nt(g, bi, m, p, n));
                    db.extend(kernels::gemm_tn(ai, g, m, n, p));
                }
                vec![(*a, da), (*b, db)]
            }
            Op::TransposeLast2(a) => {
                let g = Tensor::from_parts(y.shape().to_vec(), dy.to_vec());
                let back = kernels::transpose_last2(&g).expect("rank checked on forward");
                vec![(*a, back.into_data())]
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = split_axis(y.shape(), *axis);
                let mut offset = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let len = self.val(p).shape()[*axis];
                        let mut g = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            g.extend_from_slice(&dy[base..base + len * inner]);
                        }
                        offset += len;
                        (p, g)
                    })
                    .collect()
            }
            Op::Narrow {
                input,
                axis,
                start,
                len,
            } => {
                let x = self.val(*input);
                let (outer, n, inner) = split_axis(x.shape(), *axis);
                let mut g = vec![0.0; x.numel()];
                for o in 0..outer {
                    let src = &dy[o * len * inner..(o + 1) * len * inner];
                    let base = (o * n + start) * inner;
                    g[base..base + len * inner].copy_from_slice(src);
                }
                vec![(*input, g)]
            }
            Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                let x = self.val(*a);
                let (outer, n, inner) = split_axis(x.shape(), *axis);
                let scale = if matches!(node.op, Op::MeanAxis(..)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let mut g = Vec::with_capacity(x.numel());
                for o in 0..outer {
                    let src = &dy[o * inner..(o + 1) * inner];
                    for _ in 0..n {
                        g.extend(src.iter().map(|v| v * scale));
                    }
                }
                vec![(*a, g)]
            }
            Op::Sum(a) => vec![(*a, vec![dy[0]; self.val(*a).numel()])],
            Op::Mean(a) => {
                let n = self.val(*a).numel();
                vec![(*a, vec![dy[0] / n as f64; n])]
            }
            Op::BroadcastAxis { input, axis, .. } => {
                let g = Tensor::from_parts(y.shape().to_vec(), dy.to_vec());
                let back = kernels::sum_axis(&g, *axis).expect("axis checked on forward");
                vec![(*input, back.into_data())]
            }
            Op::Reshape(a, _) => vec![(*a, dy.to_vec())],
            Op::Relu(a) => {
                let x = self.val(*a).data();
                vec![(*a, dy.iter().zip(x).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect())]
            }
            Op::Sigmoid(a) => {
                vec![(*a, dy.iter().zip(y.data()).map(|(g, s)| g * s * (1.0 - s)).collect())]
            }
            Op::Exp(a) => vec![(*a, dy.iter().zip(y.data()).map(|(g, e)| g * e).collect())],
            Op::Log(a) => {
                let x = self.val(*a).data();
                vec![(*a, dy.iter().zip(x).map(|(g, v)| g / v).collect())]
            }
            Op::Sqrt(a) => vec![(*a, dy.iter().zip(y.data()).map(|(g, r)| 0.5 * g / r).collect())],
            Op::Abs(a) => {
                let x = self.val(*a).data();
                let sign = |v: f64| if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 };
                vec![(*a, dy.iter().zip(x).map(|(g, &v)| g * sign(v)).collect())]
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.val(*a).data();
                vec![(
                    *a,
                    dy.iter()
                        .zip(x)
                        .map(|(g, &v)| if v >= *lo && v <= *hi { *g } else { 0.0 })
                        .collect(),
                )]
            }
            Op::SoftmaxLast(a) => {
                let n = *y.shape().last().unwrap();
                let mut g = Vec::with_capacity(y.numel());
                for (ys, gs) in y.data().chunks(n).zip(dy.chunks(n)) {
                    let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                    g.extend(ys.iter().zip(gs).map(|(p, q)| p * (q - dot)));
                }
                vec![(*a, g)]
            }
            Op::L2NormalizeLast(a, eps) => {
                let x = self.val(*a);
                let n = *x.shape().last().unwrap();
                let mut g = Vec::with_capacity(x.numel());
                for ((xs, ys), gs) in x.data().chunks(n).zip(y.data().chunks(n)).zip(dy.chunks(n)) {
                    let norm = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > *eps {
                        let dot: f64 = ys.iter().zip(gs).map(|(p, q)| p * q).sum();
                        g.extend(ys.iter().zip(gs).map(|(p, q)| (q - p * dot) / norm));
                    } else {
                        g.extend(gs.iter().map(|q| q / eps));
                    }
                }
                vec![(*a, g)]
            }
        }
    }
}
