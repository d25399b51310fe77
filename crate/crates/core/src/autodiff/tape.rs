//! The recording tape and the reverse sweep.
//!
//! Every operation appends a node holding its output value. A node keeps
//! its backward rule only when at least one input requires a gradient, so
//! evaluation-only graphs hold values and nothing else. Node ids are
//! assigned in execution order, which makes the node list a topological
//! order: the reverse sweep walks it back to front once.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::ops::{col2im, ConvGeom};

pub(crate) type NodeId = usize;

pub(crate) enum Op<T> {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        rows: usize,
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        x: NodeId,
        kernel: NodeId,
        cols: Vec<T>,
        geom: ConvGeom,
    },
    AddChannelBias {
        x: NodeId,
        b: NodeId,
        channels: usize,
        spatial: usize,
    },
    MaxPool2 {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softplus(NodeId),
    Square(NodeId),
    Scale(NodeId, T),
    AddScalar(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    L2NormRows(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Reshape(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
    MixtureLogDensity {
        x: NodeId,
        pi: T,
        var1: T,
        var2: T,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul { a, b, .. } => vec![*a, *b],
            Affine { x, w, b, .. } => vec![*x, *w, *b],
            Conv2d { x, kernel, .. } => vec![*x, *kernel],
            AddChannelBias { x, b, .. } => vec![*x, *b],
            MaxPool2 { x, .. } => vec![*x],
            Relu(x) | Exp(x) | Log(x) | Softplus(x) | Square(x) | Scale(x, _) | AddScalar(x)
            | Sum(x) | Mean(x) | L2NormRows(x) | Reshape(x) => vec![*x],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => vec![*a, *b],
            SoftmaxCrossEntropy { logits, .. } => vec![*logits],
            MixtureLogDensity { x, .. } => vec![*x],
        }
    }
}

pub(crate) struct Node<T> {
    pub(crate) value: Rc<Tensor<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op<T>,
}

/// Records executed operations for one forward/backward pass.
///
/// A tape is single-threaded; build one per pass and drop it afterwards.
pub struct Tape<T: Real = f32> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real = f32> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: NodeId,
}

impl<T: Real> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value().shape())
            .finish()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// A trainable leaf: gradients flow into it.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// A constant leaf: no gradient is tracked.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        let id = self.push_node(Node {
            value: Rc::new(value),
            requires_grad,
            op: Op::Leaf,
        });
        Var { tape: self, id }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub(crate) fn value(&self, id: NodeId) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    pub(crate) fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn push_node(&self, node: Node<T>) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }

    /// Appends an op result. The backward rule is kept only if some input
    /// requires a gradient.
    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Var<'_, T> {
        let inputs = op.inputs();
        if cfg!(debug_assertions) {
            let nodes = self.nodes.borrow();
            let finite_inputs = inputs.iter().all(|&i| nodes[i].value.all_finite());
            debug_assert!(
                !finite_inputs || value.all_finite(),
                "{name}: non-finite output from finite inputs"
            );
        }
        let requires_grad = inputs.iter().any(|&i| self.requires_grad(i));
        let op = if requires_grad { op } else { Op::Leaf };
        let id = self.push_node(Node {
            value: Rc::new(value),
            requires_grad,
            op,
        });
        Var { tape: self, id }
    }

    /// Reverse sweep from a scalar `loss`. Returns the gradient of every
    /// node that requires one and is reachable from the loss.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::with_capacity(loss.id + 1);
        grads.resize_with(loss.id + 1, || None);
        grads[loss.id] = Some(Tensor::full(root.value.shape(), T::one()));

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            backprop_node(&nodes, node, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of its shape when it is unreachable from the loss.
    pub fn take(&mut self, var: Var<'_, T>) -> Tensor<T> {
        match self.grads.get_mut(var.id).and_then(Option::take) {
            Some(g) => g,
            None => Tensor::zeros(var.value().shape()),
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], id: NodeId, delta: Tensor<T>) {
    match &mut grads[id] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                *a += *b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn elementwise<T: Real>(like: &Tensor<T>, f: impl Fn(usize) -> T) -> Tensor<T> {
    let data = (0..like.len()).map(f).collect();
    Tensor::from_parts(like.shape().to_vec(), data)
}

fn backprop_node<T: Real>(
    nodes: &[Node<T>],
    node: &Node<T>,
    g: &Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) {
    let wants = |id: NodeId| nodes[id].requires_grad;
    let val = |id: NodeId| -> &Tensor<T> { &nodes[id].value };
    let gd = g.data();

    match &node.op {
        Op::Leaf => {}
        &Op::MatMul { a, b, m, k, n } => {
            if wants(a) {
                let mut da = vec![T::zero(); m * k];
                // da = g (m×n) · bᵀ (n×k)
                T::gemm(m, n, k, T::one(), gd, n as isize, 1, val(b).data(), 1, n as isize, T::zero(), &mut da, k as isize, 1);
                accumulate(grads, a, Tensor::from_parts(val(a).shape().to_vec(), da));
            }
            if wants(b) {
                let mut db = vec![T::zero(); k * n];
                // db = aᵀ (k×m) · g (m×n)
                T::gemm(k, m, n, T::one(), val(a).data(), 1, k as isize, gd, n as isize, 1, T::zero(), &mut db, n as isize, 1);
                accumulate(grads, b, Tensor::from_parts(val(b).shape().to_vec(), db));
            }
        }
        &Op::Affine { x, w, b, rows, inputs, outputs } => {
            if wants(x) {
                let mut dx = vec![T::zero(); rows * inputs];
                T::gemm(rows, outputs, inputs, T::one(), gd, outputs as isize, 1, val(w).data(), 1, outputs as isize, T::zero(), &mut dx, inputs as isize, 1);
                accumulate(grads, x, Tensor::from_parts(val(x).shape().to_vec(), dx));
            }
            if wants(w) {
                let mut dw = vec![T::zero(); inputs * outputs];
                T::gemm(inputs, rows, outputs, T::one(), val(x).data(), 1, inputs as isize, gd, outputs as isize, 1, T::zero(), &mut dw, outputs as isize, 1);
                accumulate(grads, w, Tensor::from_parts(val(w).shape().to_vec(), dw));
            }
            if wants(b) {
                let mut db = vec![T::zero(); outputs];
                for row in gd.chunks_exact(outputs) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += *v;
                    }
                }
                accumulate(grads, b, Tensor::from_parts(val(b).shape().to_vec(), db));
            }
        }
        Op::Conv2d { x, kernel, cols, geom } => {
            let (x, kernel) = (*x, *kernel);
            let rows = geom.rows();
            let patch = geom.patch();
            let spatial = geom.out_h * geom.out_w;
            let o = geom.out_channels;
            // (b, o, s) -> (b·s, o)
            let mut gmat = vec![T::zero(); rows * o];
            for bi in 0..geom.batch {
                for oc in 0..o {
                    let src = &gd[(bi * o + oc) * spatial..(bi * o + oc + 1) * spatial];
                    for (s, v) in src.iter().enumerate() {
                        gmat[(bi * spatial + s) * o + oc] = *v;
                    }
                }
            }
            if wants(kernel) {
                let mut dk = vec![T::zero(); o * patch];
                T::gemm(o, rows, patch, T::one(), &gmat, 1, o as isize, cols, patch as isize, 1, T::zero(), &mut dk, patch as isize, 1);
                accumulate(grads, kernel, Tensor::from_parts(val(kernel).shape().to_vec(), dk));
            }
            if wants(x) {
                let mut dcols = vec![T::zero(); rows * patch];
                T::gemm(rows, o, patch, T::one(), &gmat, o as isize, 1, val(kernel).data(), patch as isize, 1, T::zero(), &mut dcols, patch as isize, 1);
                let dx = col2im(&dcols, geom);
                accumulate(grads, x, Tensor::from_parts(val(x).shape().to_vec(), dx));
            }
        }
        &Op::AddChannelBias { x, b, channels, spatial } => {
            if wants(x) {
                accumulate(grads, x, g.clone());
            }
            if wants(b) {
                let mut db = vec![T::zero(); channels];
                for (i, chunk) in gd.chunks_exact(spatial).enumerate() {
                    db[i % channels] += chunk.iter().copied().sum::<T>();
                }
                accumulate(grads, b, Tensor::from_parts(vec![channels], db));
            }
        }
        Op::MaxPool2 { x, argmax } => {
            let x = *x;
            if wants(x) {
                let mut dx = vec![T::zero(); val(x).len()];
                for (j, &src) in argmax.iter().enumerate() {
                    dx[src] += gd[j];
                }
                accumulate(grads, x, Tensor::from_parts(val(x).shape().to_vec(), dx));
            }
        }
        &Op::Relu(x) => {
            if wants(x) {
                let xv = val(x).data();
                let d = elementwise(g, |i| if xv[i] > T::zero() { gd[i] } else { T::zero() });
                accumulate(grads, x, d);
            }
        }
        &Op::Exp(x) => {
            if wants(x) {
                let y = node.value.data();
                accumulate(grads, x, elementwise(g, |i| gd[i] * y[i]));
            }
        }
        &Op::Log(x) => {
            if wants(x) {
                let xv = val(x).data();
                accumulate(grads, x, elementwise(g, |i| gd[i] / xv[i]));
            }
        }
        &Op::Softplus(x) => {
            if wants(x) {
                let xv = val(x).data();
                accumulate(grads, x, elementwise(g, |i| gd[i] * sigmoid(xv[i])));
            }
        }
        &Op::Square(x) => {
            if wants(x) {
                let xv = val(x).data();
                let two = T::lit(2.0);
                accumulate(grads, x, elementwise(g, |i| two * xv[i] * gd[i]));
            }
        }
        &Op::Scale(x, c) => {
            if wants(x) {
                accumulate(grads, x, g.map(|v| v * c));
            }
        }
        &Op::AddScalar(x) | &Op::Reshape(x) => {
            if wants(x) {
                let shape = val(x).shape().to_vec();
                accumulate(grads, x, Tensor::from_parts(shape, gd.to_vec()));
            }
        }
        &Op::Sum(x) => {
            if wants(x) {
                accumulate(grads, x, Tensor::full(val(x).shape(), gd[0]));
            }
        }
        &Op::Mean(x) => {
            if wants(x) {
                let n = T::lit(val(x).len() as f64);
                accumulate(grads, x, Tensor::full(val(x).shape(), gd[0] / n));
            }
        }
        &Op::L2NormRows(x) => {
            if wants(x) {
                let xv = val(x);
                let width = xv.len() / xv.shape()[0];
                let norms = node.value.data();
                let xd = xv.data();
                // Zero norm sits at the minimum; the subgradient chosen there is 0.
                let d = elementwise(xv, |i| {
                    let r = i / width;
                    if norms[r] > T::zero() {
                        gd[r] * xd[i] / norms[r]
                    } else {
                        T::zero()
                    }
                });
                accumulate(grads, x, d);
            }
        }
        &Op::Add(a, b) => {
            if wants(a) {
                accumulate(grads, a, g.clone());
            }
            if wants(b) {
                accumulate(grads, b, g.clone());
            }
        }
        &Op::Sub(a, b) => {
            if wants(a) {
                accumulate(grads, a, g.clone());
            }
            if wants(b) {
                accumulate(grads, b, g.map(|v| -v));
            }
        }
        &Op::Mul(a, b) => {
            let (av, bv) = (val(a).data(), val(b).data());
            if wants(a) {
                accumulate(grads, a, elementwise(g, |i| gd[i] * bv[i]));
            }
            if wants(b) {
                accumulate(grads, b, elementwise(g, |i| gd[i] * av[i]));
            }
        }
        &Op::Div(a, b) => {
            let (av, bv) = (val(a).data(), val(b).data());
            if wants(a) {
                accumulate(grads, a, elementwise(g, |i| gd[i] / bv[i]));
            }
            if wants(b) {
                accumulate(grads, b, elementwise(g, |i| -gd[i] * av[i] / (bv[i] * bv[i])));
            }
        }
        Op::SoftmaxCrossEntropy { logits, targets, probs } => {
            let logits = *logits;
            if wants(logits) {
                let classes = probs.len() / targets.len();
                let mut d: Vec<T> = probs.iter().map(|&p| p * gd[0]).collect();
                for (r, &t) in targets.iter().enumerate() {
                    d[r * classes + t] -= gd[0];
                }
                accumulate(grads, logits, Tensor::from_parts(val(logits).shape().to_vec(), d));
            }
        }
        &Op::MixtureLogDensity { x, pi, var1, var2 } => {
            if wants(x) {
                let xv = val(x).data();
                let d = elementwise(val(x), |i| {
                    let (l1, l2) = mixture_component_logs(xv[i], pi, var1, var2);
                    let m = l1.max(l2);
                    let (e1, e2) = ((l1 - m).exp(), (l2 - m).exp());
                    let (r1, r2) = (e1 / (e1 + e2), e2 / (e1 + e2));
                    -gd[0] * xv[i] * (r1 / var1 + r2 / var2)
                });
                accumulate(grads, x, d);
            }
        }
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Log-weights of the two zero-mean components at `w`:
/// `ln π + ln N(w | 0, var1)` and `ln(1 − π) + ln N(w | 0, var2)`.
pub(crate) fn mixture_component_logs<T: Real>(w: T, pi: T, var1: T, var2: T) -> (T, T) {
    let half = T::lit(0.5);
    let two_pi = T::lit(std::f64::consts::TAU);
    let log_n = |var: T| -half * (two_pi * var).ln() - half * w * w / var;
    let l1 = if pi > T::zero() { pi.ln() + log_n(var1) } else { T::neg_infinity() };
    let l2 = if pi < T::one() { (T::one() - pi).ln() + log_n(var2) } else { T::neg_infinity() };
    (l1, l2)
}
