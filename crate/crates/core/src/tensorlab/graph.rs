//! Reverse-mode autodiff over [`Tensor`] values.
//!
//! A [`Graph`] is a tape: every op appends a node holding its value, so node
//! indices are already a topological order and backward is a single reverse
//! sweep. Graphs are cheap and meant to be rebuilt every optimization step.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use super::kernels::{self, BroadcastMap};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Pre-activation range applied inside [`Var::softplus`] and the blend logit.
pub const ACTIVATION_CLAMP: f64 = 30.0;

/// Op with a hand-written vector-Jacobian product, for fused kernels that
/// would be slow or awkward to express with primitives.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Gradient contribution for each input given the output gradient.
    /// `None` means the input receives nothing from this op.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    MatMul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Log(usize),
    Sigmoid(usize),
    Softplus(usize),
    Tanh(usize),
    Sqrt(usize),
    Clamp(usize, f64, f64),
    BinaryEntropy(usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    Reshape(usize),
    BroadcastTo(usize),
    Slice {
        input: usize,
        axis: usize,
        start: usize,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Custom {
        inputs: Vec<usize>,
        op: Box<dyn CustomOp>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul(..) => "matmul",
            Op::Neg(_) => "neg",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softplus(_) => "softplus",
            Op::Tanh(_) => "tanh",
            Op::Sqrt(_) => "sqrt",
            Op::Clamp(..) => "clamp",
            Op::BinaryEntropy(_) => "binary_entropy",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumAxis(..) => "sum_axis",
            Op::Reshape(_) => "reshape",
            Op::BroadcastTo(_) => "broadcast_to",
            Op::Slice { .. } => "slice",
            Op::Concat { .. } => "concat",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. Confined to one thread.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    checked: bool,
    consumed: Cell<bool>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            checked: false,
            consumed: Cell::new(false),
        }
    }

    /// Graph that validates every op output: non-finite values and `log` of
    /// non-positive inputs become errors naming the op.
    pub fn checked() -> Self {
        Self {
            checked: true,
            ..Self::new()
        }
    }

    pub fn is_checked(&self) -> bool {
        self.checked
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable input: gradients are reported for it by [`Graph::backward`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_raw(Rc::new(value), Op::Leaf, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_raw(Rc::new(value), Op::Constant, false)
    }

    /// Leaf when `trainable`, constant otherwise.
    pub fn input(&self, value: Tensor, trainable: bool) -> Var<'_> {
        if trainable {
            self.leaf(value)
        } else {
            self.constant(value)
        }
    }

    pub fn value(&self, var: Var<'_>) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[var.id].value)
    }

    /// Record a custom op whose forward value was computed by the caller.
    pub fn custom<'g>(
        &'g self,
        op: impl CustomOp + 'static,
        inputs: &[Var<'g>],
        output: Tensor,
    ) -> Result<Var<'g>> {
        let ids = inputs.iter().map(|v| v.id).collect();
        self.push(output, Op::Custom {
            inputs: ids,
            op: Box::new(op),
        })
    }

    /// Concatenate along `axis`; all other extents must agree.
    pub fn concat<'g>(&'g self, parts: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let values: Vec<Rc<Tensor>> = parts.iter().map(|v| v.value()).collect();
        let first = values[0].shape().to_vec();
        if axis >= first.len() {
            return Err(Error::InvalidArgument(format!(
                "concat axis {axis} out of range for rank {}",
                first.len()
            )));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for v in &values {
            let s = v.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let block = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let out = Tensor::new(&out_shape, data)?;
        self.push(out, Op::Concat {
            inputs: parts.iter().map(|v| v.id).collect(),
            axis,
        })
    }

    fn push_raw(&self, value: Rc<Tensor>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op) -> Result<Var<'_>> {
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            input_ids(&op).iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push_raw(Rc::new(value), op, requires_grad))
    }

    /// Gradients of a scalar output with respect to every leaf.
    ///
    /// The tape can be swept once; a second call returns an error.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let numel = output.value().numel();
        if numel != 1 {
            return Err(Error::Backward(format!(
                "output must be a scalar, got shape {:?}",
                output.shape()
            )));
        }
        self.sweep(output, vec![1.0])
    }

    /// Vector-Jacobian product: gradients of `sum(output * seed)`.
    pub fn backward_with_seed(&self, output: Var<'_>, seed: &Tensor) -> Result<Gradients> {
        let value = output.value();
        if value.shape() != seed.shape() {
            return Err(Error::Shape {
                op: "backward_with_seed",
                lhs: value.shape().to_vec(),
                rhs: seed.shape().to_vec(),
            });
        }
        self.sweep(output, seed.data().to_vec())
    }

    fn sweep(&self, output: Var<'_>, seed: Vec<f64>) -> Result<Gradients> {
        if self.consumed.replace(true) {
            return Err(Error::Backward("tape already consumed".into()));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if nodes[output.id].requires_grad {
            grads[output.id] = Some(seed);
        }
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            let g = Tensor::new(node.value.shape(), g)?;
            for (input, contribution) in node_vjp(&nodes, node, &g)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(contribution.data()) {
                            *a += c;
                        }
                    }
                    slot => *slot = Some(contribution.into_data()),
                }
            }
        }
        let grads = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(g)) => Some(Tensor::new(node.value.shape(), g).expect("leaf shape")),
                (Op::Leaf, None) => Some(Tensor::zeros(node.value.shape())),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn input_ids(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf | Op::Constant => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
            vec![*a, *b]
        }
        Op::Neg(a)
        | Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Sigmoid(a)
        | Op::Softplus(a)
        | Op::Tanh(a)
        | Op::Sqrt(a)
        | Op::Clamp(a, ..)
        | Op::BinaryEntropy(a)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::SumAxis(a, _)
        | Op::Reshape(a)
        | Op::BroadcastTo(a) => vec![*a],
        Op::Slice { input, .. } => vec![*input],
        Op::Concat { inputs, .. } | Op::Custom { inputs, .. } => inputs.clone(),
    }
}

fn unary_grad(x: &Tensor, g: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = x.data().iter().zip(g.data()).map(|(&x, &g)| f(x, g)).collect();
    Tensor::new(x.shape(), data).expect("same shape")
}

fn node_vjp(nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
    let val = |i: usize| -> &Tensor { &nodes[i].value };
    let y = &node.value;
    let out = match &node.op {
        Op::Leaf | Op::Constant => vec![],
        Op::Add(a, b) => {
            let (ma, mb) = maps(val(*a), val(*b), y.shape());
            vec![
                (*a, kernels::reduce_to(g.data(), &ma, val(*a).shape())),
                (*b, kernels::reduce_to(g.data(), &mb, val(*b).shape())),
            ]
        }
        Op::Sub(a, b) => {
            let (ma, mb) = maps(val(*a), val(*b), y.shape());
            let neg: Vec<f64> = g.data().iter().map(|v| -v).collect();
            vec![
                (*a, kernels::reduce_to(g.data(), &ma, val(*a).shape())),
                (*b, kernels::reduce_to(&neg, &mb, val(*b).shape())),
            ]
        }
        Op::Mul(a, b) => {
            let (xa, xb) = (val(*a), val(*b));
            let (ma, mb) = maps(xa, xb, y.shape());
            let ea = kernels::expand(xa.data(), &ma, g.numel());
            let eb = kernels::expand(xb.data(), &mb, g.numel());
            let ga: Vec<f64> = g.data().iter().zip(&eb).map(|(g, b)| g * b).collect();
            let gb: Vec<f64> = g.data().iter().zip(&ea).map(|(g, a)| g * a).collect();
            vec![
                (*a, kernels::reduce_to(&ga, &ma, xa.shape())),
                (*b, kernels::reduce_to(&gb, &mb, xb.shape())),
            ]
        }
        Op::Div(a, b) => {
            let (xa, xb) = (val(*a), val(*b));
            let (ma, mb) = maps(xa, xb, y.shape());
            let eb = kernels::expand(xb.data(), &mb, g.numel());
            let ga: Vec<f64> = g.data().iter().zip(&eb).map(|(g, b)| g / b).collect();
            let gb: Vec<f64> = g
                .data()
                .iter()
                .zip(&eb)
                .zip(y.data())
                .map(|((g, b), y)| -g * y / b)
                .collect();
            vec![
                (*a, kernels::reduce_to(&ga, &ma, xa.shape())),
                (*b, kernels::reduce_to(&gb, &mb, xb.shape())),
            ]
        }
        Op::MatMul(a, b) => {
            let (xa, xb) = (val(*a), val(*b));
            let (m, k) = (xa.shape()[0], xa.shape()[1]);
            let n = xb.shape()[1];
            let mut ga = vec![0.0; m * k];
            kernels::gemm(m, n, k, g.data(), false, xb.data(), true, &mut ga);
            let mut gb = vec![0.0; k * n];
            kernels::gemm(k, m, n, xa.data(), true, g.data(), false, &mut gb);
            vec![
                (*a, Tensor::new(xa.shape(), ga)?),
                (*b, Tensor::new(xb.shape(), gb)?),
            ]
        }
        Op::Neg(a) => vec![(*a, g.map(|v| -v))],
        Op::Scale(a, s) => vec![(*a, g.map(|v| v * s))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::Exp(a) => vec![(*a, unary_grad(y, g, |y, g| g * y))],
        Op::Log(a) => vec![(*a, unary_grad(val(*a), g, |x, g| g / x))],
        Op::Sigmoid(a) => vec![(*a, unary_grad(y, g, |s, g| g * s * (1.0 - s)))],
        Op::Softplus(a) => vec![(
            *a,
            unary_grad(val(*a), g, |x, g| {
                if x.abs() < ACTIVATION_CLAMP {
                    g * kernels::sigmoid(x)
                } else {
                    0.0
                }
            }),
        )],
        Op::Tanh(a) => vec![(*a, unary_grad(y, g, |t, g| g * (1.0 - t * t)))],
        Op::Sqrt(a) => vec![(*a, unary_grad(y, g, |s, g| g * 0.5 / s))],
        Op::Clamp(a, lo, hi) => vec![(
            *a,
            unary_grad(val(*a), g, |x, g| if x > *lo && x < *hi { g } else { 0.0 }),
        )],
        Op::BinaryEntropy(a) => vec![(
            *a,
            unary_grad(val(*a), g, |b, g| {
                // Endpoints use the zero subgradient.
                if b <= 0.0 || b >= 1.0 {
                    0.0
                } else {
                    g * ((1.0 - b).ln() - b.ln())
                }
            }),
        )],
        Op::Sum(a) => vec![(*a, Tensor::full(val(*a).shape(), g.item()))],
        Op::Mean(a) => {
            let x = val(*a);
            vec![(*a, Tensor::full(x.shape(), g.item() / x.numel() as f64))]
        }
        Op::SumAxis(a, axis) => {
            let x = val(*a);
            let (outer, len, inner) = kernels::split_axis(x.shape(), *axis);
            let mut gx = vec![0.0; x.numel()];
            for o in 0..outer {
                for l in 0..len {
                    let dst = &mut gx[(o * len + l) * inner..(o * len + l + 1) * inner];
                    dst.copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
            }
            vec![(*a, Tensor::new(x.shape(), gx)?)]
        }
        Op::Reshape(a) => vec![(*a, g.clone().reshape(val(*a).shape())?)],
        Op::BroadcastTo(a) => {
            let x = val(*a);
            let map = BroadcastMap::new(x.shape(), y.shape())
                .ok_or_else(|| Error::Backward("broadcast map".into()))?;
            vec![(*a, kernels::reduce_to(g.data(), &map, x.shape()))]
        }
        Op::Slice { input, axis, start } => {
            let x = val(*input);
            let (outer, len, inner) = kernels::split_axis(x.shape(), *axis);
            let width = y.shape()[*axis];
            let mut gx = vec![0.0; x.numel()];
            for o in 0..outer {
                let src = &g.data()[o * width * inner..(o + 1) * width * inner];
                let off = (o * len + start) * inner;
                gx[off..off + width * inner].copy_from_slice(src);
            }
            vec![(*input, Tensor::new(x.shape(), gx)?)]
        }
        Op::Concat { inputs, axis } => {
            let (outer, total, inner) = kernels::split_axis(y.shape(), *axis);
            let mut offset = 0;
            let mut out = Vec::with_capacity(inputs.len());
            for &i in inputs {
                let x = val(i);
                let width = x.shape()[*axis];
                let mut gx = Vec::with_capacity(x.numel());
                for o in 0..outer {
                    let base = (o * total + offset) * inner;
                    gx.extend_from_slice(&g.data()[base..base + width * inner]);
                }
                offset += width;
                out.push((i, Tensor::new(x.shape(), gx)?));
            }
            out
        }
        Op::Custom { inputs, op } => {
            let xs: Vec<&Tensor> = inputs.iter().map(|&i| val(i)).collect();
            let grads = op.backward(&xs, y, g);
            if grads.len() != inputs.len() {
                return Err(Error::Backward(format!(
                    "custom op `{}` returned {} gradients for {} inputs",
                    op.name(),
                    grads.len(),
                    inputs.len()
                )));
            }
            inputs
                .iter()
                .zip(grads)
                .filter_map(|(&i, g)| g.map(|g| (i, g)))
                .collect()
        }
    };
    Ok(out)
}

fn maps(a: &Tensor, b: &Tensor, out: &[usize]) -> (BroadcastMap, BroadcastMap) {
    (
        BroadcastMap::new(a.shape(), out).expect("validated in forward"),
        BroadcastMap::new(b.shape(), out).expect("validated in forward"),
    )
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value(*self)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a scalar node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn binary(
        self,
        other: Var<'g>,
        name: &'static str,
        op: fn(usize, usize) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        let shape = kernels::broadcast_shape(a.shape(), b.shape()).ok_or_else(|| Error::Shape {
            op: name,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })?;
        let out = kernels::binary(&a, &b, &shape, f);
        self.graph.push(out, op(self.id, other.id))
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'g>> {
        let out = self.value().map(f);
        self.graph.push(out, op)
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", Op::Mul, |a, b| a * b)
    }

    pub fn div(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "div", Op::Div, |a, b| a / b)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        kernels::gemm(m, k, n, a.data(), false, b.data(), false, &mut out);
        self.graph
            .push(Tensor::new(&[m, n], out)?, Op::MatMul(self.id, other.id))
    }

    pub fn neg(self) -> Result<Var<'g>> {
        self.unary(Op::Neg(self.id), |x| -x)
    }

    pub fn scale(self, s: f64) -> Result<Var<'g>> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn add_scalar(self, s: f64) -> Result<Var<'g>> {
        self.unary(Op::AddScalar(self.id), |x| x + s)
    }

    pub fn square(self) -> Result<Var<'g>> {
        self.mul(self)
    }

    pub fn exp(self) -> Result<Var<'g>> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Result<Var<'g>> {
        if self.graph.checked && self.value().data().iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                msg: "input has non-positive entries".into(),
            });
        }
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn sigmoid(self) -> Result<Var<'g>> {
        self.unary(Op::Sigmoid(self.id), kernels::sigmoid)
    }

    /// `ln(1 + e^x)` with `x` clamped to `[-30, 30]` first.
    pub fn softplus(self) -> Result<Var<'g>> {
        self.unary(Op::Softplus(self.id), kernels::softplus)
    }

    pub fn tanh(self) -> Result<Var<'g>> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn sqrt(self) -> Result<Var<'g>> {
        if self.graph.checked && self.value().data().iter().any(|&v| v < 0.0) {
            return Err(Error::Domain {
                op: "sqrt",
                msg: "input has negative entries".into(),
            });
        }
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Result<Var<'g>> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Elementwise `-(b ln b + (1 - b) ln(1 - b))` with `0 ln 0 = 0`.
    pub fn binary_entropy(self) -> Result<Var<'g>> {
        if self.graph.checked
            && self
                .value()
                .data()
                .iter()
                .any(|&b| !(0.0..=1.0).contains(&b))
        {
            return Err(Error::Domain {
                op: "binary_entropy",
                msg: "input outside [0, 1]".into(),
            });
        }
        self.unary(Op::BinaryEntropy(self.id), kernels::binary_entropy)
    }

    pub fn sum(self) -> Result<Var<'g>> {
        let s = self.value().sum();
        self.graph.push(Tensor::scalar(s), Op::Sum(self.id))
    }

    pub fn mean(self) -> Result<Var<'g>> {
        let v = self.value();
        let s = v.sum() / v.numel() as f64;
        self.graph.push(Tensor::scalar(s), Op::Mean(self.id))
    }

    /// Sum over one axis, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'g>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(Error::InvalidArgument(format!(
                "sum_axis {axis} out of range for rank {}",
                x.rank()
            )));
        }
        let (outer, len, inner) = kernels::split_axis(x.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for l in 0..len {
                let src = &x.data()[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        self.graph
            .push(Tensor::new(&shape, out)?, Op::SumAxis(self.id, axis))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let x = (*self.value()).clone().reshape(shape)?;
        self.graph.push(x, Op::Reshape(self.id))
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Result<Var<'g>> {
        let x = self.value();
        let map = BroadcastMap::new(x.shape(), shape).ok_or_else(|| Error::Shape {
            op: "broadcast_to",
            lhs: x.shape().to_vec(),
            rhs: shape.to_vec(),
        })?;
        let n = shape.iter().product();
        let data = kernels::expand(x.data(), &map, n);
        self.graph
            .push(Tensor::new(shape, data)?, Op::BroadcastTo(self.id))
    }

    /// Entries `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'g>> {
        let x = self.value();
        if axis >= x.rank() || start > end || end > x.shape()[axis] {
            return Err(Error::InvalidArgument(format!(
                "slice {start}..{end} on axis {axis} of shape {:?}",
                x.shape()
            )));
        }
        let (outer, len, inner) = kernels::split_axis(x.shape(), axis);
        let width = end - start;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * len + start) * inner;
            data.extend_from_slice(&x.data()[base..base + width * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = width;
        self.graph.push(
            Tensor::new(&shape, data)?,
            Op::Slice {
                input: self.id,
                axis,
                start,
            },
        )
    }
}

/// Leaf gradients produced by one backward sweep.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf; `None` for constants and intermediate nodes.
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but moves the tensor out.
    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}
