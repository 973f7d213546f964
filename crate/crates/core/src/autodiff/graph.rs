use std::collections::BTreeMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of a node on a [`Graph`] tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operations recordable on the tape.
///
/// Binary elementwise ops (`Add`, `Sub`, `Mul`) broadcast the smaller operand
/// over leading axes: its shape, with leading unit axes removed, must be a
/// suffix of the larger operand's shape, or it must hold a single element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive<T> {
    /// Non-trainable leaf.
    Constant,
    /// Trainable leaf; receives an entry in the [`GradientMap`].
    Param,
    /// `[n, k] x [k, m] -> [n, m]`.
    MatMul,
    Add,
    Sub,
    Mul,
    Exp,
    Log,
    Neg,
    Relu,
    Square,
    Abs,
    /// Multiply by a constant.
    Scale(T),
    /// Sum of all elements, shape `[1]`.
    Sum,
    /// Mean of all elements, shape `[1]`.
    Mean,
    /// Sum over the last axis.
    SumLastAxis,
    /// Shift-by-max log-sum-exp over the last axis.
    LogSumExp,
    /// 2-D transpose.
    Transpose,
}

impl<T> Primitive<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Constant => "constant",
            Primitive::Param => "param",
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Neg => "neg",
            Primitive::Relu => "relu",
            Primitive::Square => "square",
            Primitive::Abs => "abs",
            Primitive::Scale(_) => "scale",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::SumLastAxis => "sum_last_axis",
            Primitive::LogSumExp => "logsumexp",
            Primitive::Transpose => "transpose",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::Constant | Primitive::Param => 0,
            Primitive::MatMul | Primitive::Add | Primitive::Sub | Primitive::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Primitive<T>,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
}

/// Gradients of a scalar loss with respect to every parameter leaf.
pub type GradientMap<T> = BTreeMap<NodeId, Tensor<T>>;

/// Append-only tape of primitive applications.
///
/// Nodes only reference earlier nodes, so reverse list order is a valid
/// topological order for the backward sweep.
#[derive(Clone, Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Primitive::Constant, Vec::new(), value)
    }

    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Primitive::Param, Vec::new(), value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn op(&self, id: NodeId) -> Primitive<T> {
        self.nodes[id.0].op
    }

    /// Ids of all parameter leaves, in creation order.
    pub fn params(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Primitive::Param))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    fn push(&mut self, op: Primitive<T>, inputs: Vec<NodeId>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, inputs, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Evaluates `op` on `inputs` and records the result.
    pub fn apply(&mut self, op: Primitive<T>, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != op.arity() {
            return Err(Error::invalid(format!("{} takes {} inputs, got {}", op.name(), op.arity(), inputs.len())));
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::invalid(format!("{}: unknown node {:?}", op.name(), bad)));
        }
        let value = {
            let x = |i: usize| &self.nodes[inputs[i].0].value;
            match op {
                Primitive::Constant | Primitive::Param => {
                    return Err(Error::invalid("leaves are created with constant()/param()"))
                }
                Primitive::MatMul => matmul_forward(x(0), x(1))?,
                Primitive::Add => broadcast_binary("add", x(0), x(1), |a, b| a + b)?,
                Primitive::Sub => broadcast_binary("sub", x(0), x(1), |a, b| a - b)?,
                Primitive::Mul => broadcast_binary("mul", x(0), x(1), |a, b| a * b)?,
                Primitive::Exp => x(0).map(|v| v.exp()),
                Primitive::Log => {
                    if let Some(v) = x(0).data().iter().find(|v| !(**v > T::zero())) {
                        return Err(Error::Domain { op: "log", msg: format!("non-positive input {v}") });
                    }
                    x(0).map(|v| v.ln())
                }
                Primitive::Neg => x(0).map(|v| -v),
                Primitive::Relu => x(0).map(|v| if v > T::zero() { v } else { T::zero() }),
                Primitive::Square => x(0).map(|v| v * v),
                Primitive::Abs => x(0).map(|v| v.abs()),
                Primitive::Scale(c) => x(0).map(|v| v * c),
                Primitive::Sum => Tensor::scalar(x(0).data().iter().copied().sum()),
                Primitive::Mean => {
                    let t = x(0);
                    let s: T = t.data().iter().copied().sum();
                    Tensor::scalar(s / T::of(t.numel() as f64))
                }
                Primitive::SumLastAxis => reduce_last_axis(x(0), |row| row.iter().copied().sum()),
                Primitive::LogSumExp => reduce_last_axis(x(0), logsumexp),
                Primitive::Transpose => transpose(x(0))?,
            }
        };
        Ok(self.push(op, inputs.to_vec(), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Log, &[a])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Neg, &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Relu, &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Square, &[a])
    }
    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Abs, &[a])
    }
    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        self.apply(Primitive::Scale(c), &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mean, &[a])
    }
    pub fn sum_last_axis(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::SumLastAxis, &[a])
    }
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::LogSumExp, &[a])
    }
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Transpose, &[a])
    }

    /// Reverse sweep from a one-element `loss` node.
    ///
    /// Every parameter leaf gets an entry; leaves the loss does not depend on
    /// get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", loss_value.shape())));
        }
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if matches!(node.op, Primitive::Param) {
                adj[idx] = Some(g);
                continue;
            }
            for (slot, contrib) in self.local_grads(node, &g).into_iter().enumerate() {
                let Some(contrib) = contrib else { continue };
                let input = node.inputs[slot].0;
                match &mut adj[input] {
                    Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a = *a + *c),
                    empty => *empty = Some(contrib),
                }
            }
        }

        let mut grads = GradientMap::new();
        for id in self.params() {
            let shape = self.nodes[id.0].value.shape().to_vec();
            let g = match adj.get_mut(id.0).and_then(Option::take) {
                Some(g) => Tensor::new(shape, g)?,
                None => Tensor::zeros(shape),
            };
            grads.insert(id, g);
        }
        Ok(grads)
    }

    /// Vector-Jacobian products of `node` for upstream gradient `g`.
    fn local_grads(&self, node: &Node<T>, g: &[T]) -> Vec<Option<Vec<T>>> {
        let input = |i: usize| &self.nodes[node.inputs[i].0].value;
        let out = &node.value;
        let unary =
            |f: &dyn Fn(usize) -> T| -> Vec<Option<Vec<T>>> { vec![Some((0..g.len()).map(|i| g[i] * f(i)).collect())] };
        match node.op {
            Primitive::Constant => Vec::new(),
            Primitive::Param => unreachable!(),
            Primitive::MatMul => {
                let (a, b) = (input(0), input(1));
                let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let (ad, bd) = (a.data(), b.data());
                // da = g b^T, db = a^T g
                let mut da = vec![T::zero(); n * k];
                let mut db = vec![T::zero(); k * m];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g[i * m + j];
                        if gij == T::zero() {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] = da[i * k + p] + gij * bd[p * m + j];
                            db[p * m + j] = db[p * m + j] + ad[i * k + p] * gij;
                        }
                    }
                }
                vec![Some(da), Some(db)]
            }
            Primitive::Add => broadcast_backward(input(0), input(1), g, |_, _| (T::one(), T::one())),
            Primitive::Sub => broadcast_backward(input(0), input(1), g, |_, _| (T::one(), -T::one())),
            Primitive::Mul => broadcast_backward(input(0), input(1), g, |a, b| (b, a)),
            Primitive::Exp => unary(&|i| out.data()[i]),
            Primitive::Log => {
                let x = input(0).data();
                unary(&|i| T::one() / x[i])
            }
            Primitive::Neg => unary(&|_| -T::one()),
            Primitive::Relu => {
                let x = input(0).data();
                unary(&|i| if x[i] > T::zero() { T::one() } else { T::zero() })
            }
            Primitive::Square => {
                let x = input(0).data();
                unary(&|i| T::of(2.0) * x[i])
            }
            Primitive::Abs => {
                // subgradient 0 at the kink
                let x = input(0).data();
                unary(&|i| {
                    if x[i] > T::zero() {
                        T::one()
                    } else if x[i] < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                })
            }
            Primitive::Scale(c) => unary(&|_| c),
            Primitive::Sum => vec![Some(vec![g[0]; input(0).numel()])],
            Primitive::Mean => {
                let n = input(0).numel();
                vec![Some(vec![g[0] / T::of(n as f64); n])]
            }
            Primitive::SumLastAxis => {
                let c = input(0).last_dim();
                vec![Some((0..input(0).numel()).map(|i| g[i / c]).collect())]
            }
            Primitive::LogSumExp => {
                let x = input(0);
                let c = x.last_dim();
                let grad =
                    x.data().iter().enumerate().map(|(i, &v)| g[i / c] * (v - out.data()[i / c]).exp()).collect();
                vec![Some(grad)]
            }
            Primitive::Transpose => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                // out is [r, c]; input is [c, r]
                let mut grad = vec![T::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        grad[j * r + i] = g[i * c + j];
                    }
                }
                vec![Some(grad)]
            }
        }
    }
}

/// Shift-by-max log-sum-exp of a slice.
pub fn logsumexp<T: Scalar>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    if max == T::infinity() {
        return max;
    }
    let s: T = v.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

fn reduce_last_axis<T: Scalar>(x: &Tensor<T>, f: impl Fn(&[T]) -> T) -> Tensor<T> {
    let c = x.last_dim();
    let data: Vec<T> = x.data().chunks(c).map(f).collect();
    let shape = if x.ndim() == 1 { vec![1] } else { x.shape()[..x.ndim() - 1].to_vec() };
    Tensor::new(shape, data).expect("reduction shape")
}

fn matmul_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = ad[i * k + p];
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + aip * bv;
            }
        }
    }
    Tensor::new(vec![n, m], out)
}

fn transpose<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.ndim() != 2 {
        return Err(Error::shape("transpose", format!("{:?} is not 2-D", x.shape())));
    }
    let (r, c) = (x.shape()[0], x.shape()[1]);
    let d = x.data();
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = d[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out)
}

fn strip_leading_ones(shape: &[usize]) -> &[usize] {
    let lead = shape.iter().take_while(|&&d| d == 1).count();
    let lead = lead.min(shape.len() - 1);
    &shape[lead..]
}

/// True when `small` can be broadcast onto `big` over leading axes.
fn broadcastable(big: &[usize], small: &[usize]) -> bool {
    let small_numel: usize = small.iter().product();
    if small_numel == 1 {
        return true;
    }
    let s = strip_leading_ones(small);
    s.len() <= big.len() && big[big.len() - s.len()..] == *s
}

fn broadcast_binary<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape().to_vec(), data);
    }
    let (ad, bd) = (a.data(), b.data());
    if a.numel() >= b.numel() && broadcastable(a.shape(), b.shape()) {
        let nb = b.numel();
        let data = ad.iter().enumerate().map(|(i, &x)| f(x, bd[i % nb])).collect();
        Tensor::new(a.shape().to_vec(), data)
    } else if b.numel() > a.numel() && broadcastable(b.shape(), a.shape()) {
        let na = a.numel();
        let data = bd.iter().enumerate().map(|(i, &y)| f(ad[i % na], y)).collect();
        Tensor::new(b.shape().to_vec(), data)
    } else {
        Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())))
    }
}

/// `d(a, b)` returns the partial derivatives of the elementwise op at `(a, b)`.
fn broadcast_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    g: &[T],
    d: impl Fn(T, T) -> (T, T),
) -> Vec<Option<Vec<T>>> {
    let (na, nb) = (a.numel(), b.numel());
    let (ad, bd) = (a.data(), b.data());
    let mut ga = vec![T::zero(); na];
    let mut gb = vec![T::zero(); nb];
    for (i, &gi) in g.iter().enumerate() {
        let (ia, ib) = (i % na, i % nb);
        let (da, db) = d(ad[ia], bd[ib]);
        ga[ia] = ga[ia] + gi * da;
        gb[ib] = gb[ib] + gi * db;
    }
    vec![Some(ga), Some(gb)]
}
