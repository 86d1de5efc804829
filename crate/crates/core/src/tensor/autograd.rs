//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s in creation
//! order, so the tape is already topologically sorted. `backward` walks it in
//! reverse and accumulates gradients into the leaves created with
//! `requires_grad`. A graph is confined to one thread; independent graphs
//! (one per sample, say) can be built concurrently.

use std::cell::RefCell;
use std::rc::Rc;

use super::kernels::{self, broadcast_index_map, broadcast_shape, reduced_shape};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Offset(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Square(usize),
    Conv2d { input: usize, weights: usize, bias: Option<usize>, stride: usize, padding: usize },
    MaxPool2 { input: usize, argmax: Vec<usize> },
    Upsample2(usize),
    Softmax2d { input: usize, beta: f64 },
    Sum { input: usize },
    Max { input: usize, argmax: Vec<usize> },
    Concat { inputs: Vec<usize>, axis: usize },
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// An autodiff tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf tensor.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op: Op::Leaf, requires_grad, grad: None });
        Var { graph: self, id: nodes.len() - 1 }
    }

    /// A trainable leaf.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat<'g>(&'g self, vars: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let first = vars.first().ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(Error::dim(axis.to_string(), "concat axis out of range"));
        }
        let values: Vec<Rc<Tensor>> = vars.iter().map(|v| self.check_owner(v).value()).collect();
        for v in &values[1..] {
            let s = v.shape();
            if s.len() != base.len() || (0..s.len()).any(|a| a != axis && s[a] != base[a]) {
                return Err(Error::dim(axis.to_string(), format!("cannot concat {:?} with {base:?}", s)));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut shape = base.clone();
        shape[axis] = values.iter().map(|v| v.shape()[axis]).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in &values {
                let block = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let inputs = vars.iter().map(|v| v.id).collect();
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { inputs, axis }))
    }

    fn check_owner<'g>(&'g self, v: &Var<'g>) -> Var<'g> {
        assert!(std::ptr::eq(self, v.graph), "variables from different graphs");
        *v
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = parents(&op).iter().any(|&p| self.requires_grad(p));
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, requires_grad, grad: None });
        Var { graph: self, id: nodes.len() - 1 }
    }

    fn backward_from(&self, loss: usize) -> Result<()> {
        let leaf_grads = {
            let nodes = self.nodes.borrow();
            if nodes[loss].value.numel() != 1 {
                return Err(Error::Contract(format!(
                    "backward needs a scalar loss, got shape {:?}",
                    nodes[loss].value.shape()
                )));
            }
            let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss + 1];
            adj[loss] = Some(vec![1.0]);
            let mut leaf_grads = Vec::new();
            for id in (0..=loss).rev() {
                let Some(g) = adj[id].take() else { continue };
                let node = &nodes[id];
                if !node.requires_grad {
                    continue;
                }
                if let Op::Leaf = node.op {
                    leaf_grads.push((id, g));
                    continue;
                }
                propagate(&nodes, id, g, &mut adj)?;
            }
            leaf_grads
        };
        let mut nodes = self.nodes.borrow_mut();
        for (id, g) in leaf_grads {
            let node = &mut nodes[id];
            match &mut node.grad {
                Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot @ None => *slot = Some(Tensor::new(node.value.shape().to_vec(), g)?),
            }
        }
        Ok(())
    }
}

fn parents(op: &Op) -> Vec<usize> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::Offset(a)
        | Op::Relu(a)
        | Op::Sigmoid(a)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Sqrt(a)
        | Op::Square(a)
        | Op::Upsample2(a)
        | Op::Reshape(a) => vec![*a],
        Op::Conv2d { input, weights, bias, .. } => {
            let mut p = vec![*input, *weights];
            p.extend(bias);
            p
        }
        Op::MaxPool2 { input, .. } | Op::Softmax2d { input, .. } | Op::Sum { input } | Op::Max { input, .. } => {
            vec![*input]
        }
        Op::Concat { inputs, .. } => inputs.clone(),
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: usize, contribution: Vec<f64>) {
    match &mut adj[id] {
        Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(contribution),
    }
}

/// Sums `grad` (shaped like `out_shape`) down onto `target_shape`.
fn unbroadcast(grad: &[f64], out_shape: &[usize], target_shape: &[usize]) -> Vec<f64> {
    if out_shape == target_shape {
        return grad.to_vec();
    }
    let map = broadcast_index_map(target_shape, out_shape);
    let mut out = vec![0.0; target_shape.iter().product()];
    for (g, &t) in grad.iter().zip(&map) {
        out[t] += g;
    }
    out
}

/// Pushes the adjoint `g` of node `id` onto its parents.
fn propagate(nodes: &[Node], id: usize, g: Vec<f64>, adj: &mut [Option<Vec<f64>>]) -> Result<()> {
    let out = &nodes[id].value;
    let val = |i: usize| &nodes[i].value;
    let wants = |i: usize| nodes[i].requires_grad;
    match &nodes[id].op {
        Op::Leaf => {}
        Op::Add(a, b) | Op::Sub(a, b) => {
            let sign = if matches!(nodes[id].op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if wants(*a) {
                accumulate(adj, *a, unbroadcast(&g, out.shape(), val(*a).shape()));
            }
            if wants(*b) {
                let gb: Vec<f64> = g.iter().map(|v| sign * v).collect();
                accumulate(adj, *b, unbroadcast(&gb, out.shape(), val(*b).shape()));
            }
        }
        Op::Mul(a, b) | Op::Div(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let ma = broadcast_index_map(va.shape(), out.shape());
            let mb = broadcast_index_map(vb.shape(), out.shape());
            let is_div = matches!(nodes[id].op, Op::Div(..));
            if wants(*a) {
                let ga: Vec<f64> = (0..g.len())
                    .map(|i| {
                        let y = vb.data()[mb[i]];
                        if is_div { g[i] / y } else { g[i] * y }
                    })
                    .collect();
                accumulate(adj, *a, unbroadcast(&ga, out.shape(), va.shape()));
            }
            if wants(*b) {
                let gb: Vec<f64> = (0..g.len())
                    .map(|i| {
                        let (x, y) = (va.data()[ma[i]], vb.data()[mb[i]]);
                        if is_div { -g[i] * x / (y * y) } else { g[i] * x }
                    })
                    .collect();
                accumulate(adj, *b, unbroadcast(&gb, out.shape(), vb.shape()));
            }
        }
        Op::Scale(a, c) => accumulate(adj, *a, g.iter().map(|v| v * c).collect()),
        Op::Offset(a) | Op::Reshape(a) => accumulate(adj, *a, g),
        Op::Relu(a) => {
            let x = val(*a).data();
            accumulate(adj, *a, g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect());
        }
        Op::Sigmoid(a) => {
            accumulate(adj, *a, g.iter().zip(out.data()).map(|(g, y)| g * y * (1.0 - y)).collect());
        }
        Op::Exp(a) => accumulate(adj, *a, g.iter().zip(out.data()).map(|(g, y)| g * y).collect()),
        Op::Log(a) => {
            accumulate(adj, *a, g.iter().zip(val(*a).data()).map(|(g, x)| g / x).collect());
        }
        Op::Sqrt(a) => {
            accumulate(adj, *a, g.iter().zip(out.data()).map(|(g, y)| 0.5 * g / y).collect());
        }
        Op::Square(a) => {
            accumulate(adj, *a, g.iter().zip(val(*a).data()).map(|(g, x)| 2.0 * g * x).collect());
        }
        Op::Conv2d { input, weights, bias, stride, padding } => {
            let grad_out = Tensor::new(out.shape().to_vec(), g)?;
            let (dx, dw, db) = kernels::conv2d_backward(val(*input), val(*weights), &grad_out, *stride, *padding)?;
            if wants(*input) {
                accumulate(adj, *input, dx.into_data());
            }
            if wants(*weights) {
                accumulate(adj, *weights, dw.into_data());
            }
            if let Some(b) = bias {
                if wants(*b) {
                    accumulate(adj, *b, db.into_data());
                }
            }
        }
        Op::MaxPool2 { input, argmax } | Op::Max { input, argmax } => {
            let mut dx = vec![0.0; val(*input).numel()];
            for (g, &src) in g.iter().zip(argmax) {
                dx[src] += g;
            }
            accumulate(adj, *input, dx);
        }
        Op::Upsample2(a) => {
            let grad_out = Tensor::new(out.shape().to_vec(), g)?;
            accumulate(adj, *a, kernels::upsample2_backward(&grad_out)?.into_data());
        }
        Op::Softmax2d { input, beta } => {
            let shape = out.shape();
            let plane = shape[shape.len() - 2] * shape[shape.len() - 1];
            let y = out.data();
            let mut dx = vec![0.0; y.len()];
            for p in 0..y.len() / plane {
                let r = p * plane..(p + 1) * plane;
                let dot: f64 = g[r.clone()].iter().zip(&y[r.clone()]).map(|(g, y)| g * y).sum();
                for i in r {
                    dx[i] = beta * y[i] * (g[i] - dot);
                }
            }
            accumulate(adj, *input, dx);
        }
        Op::Sum { input } => {
            let in_shape = val(*input).shape();
            let map = broadcast_index_map(out.shape(), in_shape);
            accumulate(adj, *input, map.iter().map(|&o| g[o]).collect());
        }
        Op::Concat { inputs, axis } => {
            let shape = out.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let mut offset = 0;
            let row = shape[*axis] * inner;
            for &i in inputs {
                let block = val(i).shape()[*axis] * inner;
                if wants(i) {
                    let mut gi = Vec::with_capacity(val(i).numel());
                    for o in 0..outer {
                        gi.extend_from_slice(&g[o * row + offset..o * row + offset + block]);
                    }
                    accumulate(adj, i, gi);
                }
                offset += block;
            }
        }
    }
    Ok(())
}

impl<'g> Var<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    /// Current value (cheap shared handle).
    pub fn value(&self) -> Rc<Tensor> {
        self.graph.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.requires_grad(self.id)
    }

    /// Accumulated gradient of a leaf after `backward`.
    pub fn grad(&self) -> Option<Tensor> {
        self.graph.nodes.borrow()[self.id].grad.clone()
    }

    /// Back-propagates from this scalar into every reachable trainable leaf.
    /// Gradients accumulate across calls until [`Graph::zero_grad`].
    pub fn backward(&self) -> Result<()> {
        self.graph.backward_from(self.id)
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'g> {
        let value = self.value().map(f);
        self.graph.push(value, op)
    }

    fn binary(self, other: Var<'g>, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var<'g>> {
        let other = self.graph.check_owner(&other);
        let (a, b) = (self.value(), other.value());
        let data = if a.shape() == b.shape() {
            a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let shape = broadcast_shape(a.shape(), b.shape())?;
            let ma = broadcast_index_map(a.shape(), &shape);
            let mb = broadcast_index_map(b.shape(), &shape);
            let data = ma.iter().zip(&mb).map(|(&i, &j)| f(a.data()[i], b.data()[j])).collect();
            return Ok(self.graph.push(Tensor::new(shape, data)?, op));
        };
        Ok(self.graph.push(Tensor::new(a.shape().to_vec(), data)?, op))
    }

    /// Element-wise sum with broadcasting.
    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, |x, y| x + y, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, |x, y| x - y, Op::Sub(self.id, other.id))
    }

    /// Element-wise product with broadcasting over singleton axes.
    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, |x, y| x * y, Op::Mul(self.id, other.id))
    }

    pub fn div(self, other: Var<'g>) -> Result<Var<'g>> {
        self.binary(other, |x, y| x / y, Op::Div(self.id, other.id))
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.unary(Op::Scale(self.id, c), |x| x * c)
    }

    pub fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }

    pub fn offset(self, c: f64) -> Var<'g> {
        self.unary(Op::Offset(self.id), |x| x + c)
    }

    pub fn relu(self) -> Var<'g> {
        self.unary(Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn sigmoid(self) -> Var<'g> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn exp(self) -> Var<'g> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Var<'g> {
        self.unary(Op::Log(self.id), f64::ln)
    }

    pub fn sqrt(self) -> Var<'g> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn square(self) -> Var<'g> {
        self.unary(Op::Square(self.id), |x| x * x)
    }

    /// Cross-correlation; see [`kernels::conv2d`].
    pub fn conv2d(self, weights: Var<'g>, bias: Option<Var<'g>>, stride: usize, padding: usize) -> Result<Var<'g>> {
        let weights = self.graph.check_owner(&weights);
        let b = bias.map(|b| self.graph.check_owner(&b).value());
        let value = kernels::conv2d(&self.value(), &weights.value(), b.as_deref(), stride, padding)?;
        let op = Op::Conv2d { input: self.id, weights: weights.id, bias: bias.map(|b| b.id), stride, padding };
        Ok(self.graph.push(value, op))
    }

    /// 2×2 max pooling; ties route the gradient to the first cell in row-major order.
    pub fn maxpool2(self) -> Result<Var<'g>> {
        let (value, argmax) = kernels::maxpool2(&self.value())?;
        Ok(self.graph.push(value, Op::MaxPool2 { input: self.id, argmax }))
    }

    pub fn upsample2(self) -> Result<Var<'g>> {
        let value = kernels::upsample2(&self.value())?;
        Ok(self.graph.push(value, Op::Upsample2(self.id)))
    }

    /// Softmax of `beta·x` over the last two (spatial) axes of every plane.
    pub fn softmax2d(self, beta: f64) -> Result<Var<'g>> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Contract(format!("softmax temperature must be positive, got {beta}")));
        }
        let value = softmax2d(&self.value(), beta)?;
        Ok(self.graph.push(value, Op::Softmax2d { input: self.id, beta }))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(self) -> Var<'g> {
        let total = self.value().sum();
        self.graph.push(Tensor::scalar(total), Op::Sum { input: self.id })
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over `axes`, keeping them as size-1 dimensions.
    pub fn sum_axes(self, axes: &[usize]) -> Result<Var<'g>> {
        let x = self.value();
        let shape = reduced_shape(x.shape(), axes)?;
        let map = broadcast_index_map(&shape, x.shape());
        let mut data = vec![0.0; shape.iter().product()];
        for (v, &o) in x.data().iter().zip(&map) {
            data[o] += v;
        }
        let op = Op::Sum { input: self.id };
        Ok(self.graph.push(Tensor::new(shape, data)?, op))
    }

    pub fn mean_axes(self, axes: &[usize]) -> Result<Var<'g>> {
        let shape = self.shape();
        let count: usize = axes.iter().map(|&a| shape.get(a).copied().unwrap_or(1)).product();
        Ok(self.sum_axes(axes)?.scale(1.0 / count as f64))
    }

    /// Maximum over `axes` (kept as size-1); ties resolve to the first index.
    pub fn max_axes(self, axes: &[usize]) -> Result<Var<'g>> {
        let x = self.value();
        let shape = reduced_shape(x.shape(), axes)?;
        let map = broadcast_index_map(&shape, x.shape());
        let mut argmax: Vec<Option<usize>> = vec![None; shape.iter().product()];
        for (i, &o) in map.iter().enumerate() {
            match argmax[o] {
                Some(best) if x.data()[best] >= x.data()[i] => {}
                _ => argmax[o] = Some(i),
            }
        }
        let argmax: Vec<usize> = argmax.into_iter().map(|a| a.expect("non-empty reduction")).collect();
        let data = argmax.iter().map(|&i| x.data()[i]).collect();
        Ok(self.graph.push(Tensor::new(shape, data)?, Op::Max { input: self.id, argmax }))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'g>> {
        let value = Tensor::new(shape, self.value().data().to_vec())?;
        Ok(self.graph.push(value, Op::Reshape(self.id)))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of `beta·x` over each trailing `H×W` plane.
pub fn softmax2d(x: &Tensor, beta: f64) -> Result<Tensor> {
    if x.ndim() < 2 {
        return Err(Error::dim("rank", "softmax2d needs at least two axes"));
    }
    if !x.is_finite() {
        return Err(Error::Numeric("softmax2d input contains non-finite values".into()));
    }
    let shape = x.shape();
    let plane = shape[shape.len() - 2] * shape[shape.len() - 1];
    let mut out = x.data().to_vec();
    for p in out.chunks_mut(plane) {
        let max = p.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in p.iter_mut() {
            *v = (beta * (*v - max)).exp();
            total += *v;
        }
        p.iter_mut().for_each(|v| *v /= total);
    }
    Tensor::new(shape.to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1<'g>(g: &'g Graph, data: &[f64]) -> Var<'g> {
        g.param(Tensor::new(vec![data.len()], data.to_vec()).unwrap())
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let g = Graph::new();
        let x = vec1(&g, &[1.0, -2.0, 3.0]);
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let g = Graph::new();
        let x = vec1(&g, &[1.0, 2.0, 3.0]);
        x.square().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), [2.0, 4.0, 6.0]);
    }

    #[test]
    fn repeated_backward_accumulates_until_zeroed() {
        let g = Graph::new();
        let x = vec1(&g, &[1.0, 2.0]);
        let loss = x.square().sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), [4.0, 8.0]);
        g.zero_grad();
        assert!(x.grad().is_none());
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), [2.0, 4.0]);
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let g = Graph::new();
        let x = vec1(&g, &[1.0, 2.0]);
        assert!(matches!(x.square().backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_grad() {
        let g = Graph::new();
        let x = vec1(&g, &[1.0, 2.0]);
        let c = g.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
        x.mul(c).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), [3.0, 4.0]);
        assert!(c.grad().is_none());
    }

    #[test]
    fn broadcast_mul_reduces_gradient() {
        let g = Graph::new();
        let x = g.param(Tensor::ones(vec![1, 2, 2, 2]));
        let w = g.param(Tensor::new(vec![1, 2, 1, 1], vec![2.0, 3.0]).unwrap());
        let y = x.mul(w).unwrap();
        assert_eq!(y.value().data(), [2.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
        y.sum().backward().unwrap();
        assert_eq!(w.grad().unwrap().data(), [4.0, 4.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        let g = Graph::new();
        let y = g.constant(Tensor::zeros(vec![3])).sigmoid();
        assert_eq!(y.value().data(), [0.5; 3]);
    }

    #[test]
    fn softmax_uniform_plane() {
        for beta in [0.1, 1.0, 10.0] {
            let y = softmax2d(&Tensor::full(vec![1, 2, 3, 4], 0.7), beta).unwrap();
            assert!(y.data().iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-15));
        }
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let mut x = Tensor::zeros(vec![1, 1, 2, 2]);
        x.data_mut()[1] = f64::NAN;
        assert!(matches!(softmax2d(&x, 1.0), Err(Error::Numeric(_))));
    }

    #[test]
    fn max_axes_ties_first() {
        let g = Graph::new();
        let x = g.param(Tensor::full(vec![1, 3, 1, 1], 1.0));
        let m = x.max_axes(&[1]).unwrap();
        m.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_roundtrips_gradient() {
        let g = Graph::new();
        let a = g.param(Tensor::ones(vec![2, 1, 2]));
        let b = g.param(Tensor::full(vec![2, 2, 2], 2.0));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), [2, 3, 2]);
        assert_eq!(c.value().data(), [1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        let w = g.constant(Tensor::from_fn(vec![2, 3, 2], |i| i as f64));
        c.mul(w).unwrap().sum().backward().unwrap();
        assert_eq!(a.grad().unwrap().data(), [0.0, 1.0, 6.0, 7.0]);
        assert_eq!(b.grad().unwrap().data(), [2.0, 3.0, 4.0, 5.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
