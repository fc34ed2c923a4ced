//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the append order is a valid
//! topological order and `backward` is a single reverse sweep. Parameters are
//! leaves bound to a [`ParamStore`] entry; each parameter gets one leaf per
//! graph no matter how often it is read.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::conv::{self, Conv2dGeom, ConvDims};
use crate::error::{invalid, shape_err, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{self, Tensor};

static NEXT_GRAPH: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId {
    graph: u64,
    index: usize,
}

/// An operation whose forward value is computed outside the graph and whose
/// vector-Jacobian product is supplied by the implementor.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input (`None` when the input is not differentiable).
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Result<Vec<Option<Tensor>>>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Sigmoid,
    Tanh,
    Relu,
    Elu(f64),
    Square,
    Sqrt,
    Abs,
    Log,
    Exp,
    ClampMax(f64),
}

impl Unary {
    fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Relu => x.max(0.0),
            Unary::Elu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x.exp_m1()
                }
            }
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::Abs => x.abs(),
            Unary::Log => x.ln(),
            Unary::Exp => x.exp(),
            Unary::ClampMax(c) => x.min(c),
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn deriv(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Elu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    y + a
                }
            }
            Unary::Square => 2.0 * x,
            Unary::Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            Unary::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Unary::Log => 1.0 / x,
            Unary::Exp => y,
            Unary::ClampMax(c) => {
                if x < c {
                    1.0
                } else {
                    0.0
                }
            }
        }
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

enum Op {
    Constant,
    Variable,
    Param,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Unary(usize, Unary),
    Magnitude(usize, usize),
    MatMul(usize, usize),
    AddBias(usize, usize),
    AddChannelBias(usize, usize),
    ScaleRows(usize, usize),
    Sum(usize),
    RowSum(usize),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Concat(Vec<usize>, usize),
    Slice { input: usize, axis: usize, start: usize },
    Conv2d { x: usize, w: usize, geom: Conv2dGeom },
    Deconv2d { x: usize, w: usize, geom: Conv2dGeom },
    Custom(Vec<usize>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation record.
pub struct Graph {
    id: u64,
    nodes: Vec<Node>,
    param_nodes: HashMap<(u64, ParamId), usize>,
    primary_store: Option<u64>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            id: NEXT_GRAPH.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            primary_store: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, id: NodeId) -> Result<usize> {
        if id.graph != self.id || id.index >= self.nodes.len() {
            return Err(Error::Graph("node does not belong to this graph".into()));
        }
        Ok(id.index)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId {
            graph: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        Ok(&self.nodes[self.idx(id)?].value)
    }

    pub fn shape(&self, id: NodeId) -> Result<&[usize]> {
        Ok(self.value(id)?.shape())
    }

    pub fn requires_grad(&self, id: NodeId) -> Result<bool> {
        Ok(self.rg(self.idx(id)?))
    }

    /// Untracked input.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Constant, false)
    }

    /// Tracked input that receives a gradient but is not a stored parameter.
    pub fn variable(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Variable, true)
    }

    pub fn param(&mut self, store: &ParamStore, pid: ParamId) -> Result<NodeId> {
        let key = (store.uid(), pid);
        if let Some(&i) = self.param_nodes.get(&key) {
            return Ok(NodeId {
                graph: self.id,
                index: i,
            });
        }
        let value = store.get(pid)?.clone();
        let id = self.push(value, Op::Param, true);
        self.param_nodes.insert(key, id.index);
        self.primary_store.get_or_insert(store.uid());
        Ok(id)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Tensor)> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.zip_with(&self.nodes[ib].value, op, f)?;
        Ok((ia, ib, v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, v) = self.binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(v, Op::Add(ia, ib), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, v) = self.binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(v, Op::Sub(ia, ib), rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, v) = self.binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(v, Op::Mul(ia, ib), rg))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib, v) = self.binary(a, b, "div", |x, y| x / y)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(v, Op::Div(ia, ib), rg))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.scale(k);
        let rg = self.rg(ia);
        Ok(self.push(v, Op::Scale(ia, k), rg))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| x + k);
        let rg = self.rg(ia);
        Ok(self.push(v, Op::AddScalar(ia), rg))
    }

    fn unary(&mut self, a: NodeId, u: Unary) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| u.eval(x));
        let rg = self.rg(ia);
        Ok(self.push(v, Op::Unary(ia, u), rg))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Tanh)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Relu)
    }

    pub fn elu(&mut self, a: NodeId, alpha: f64) -> Result<NodeId> {
        self.unary(a, Unary::Elu(alpha))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Square)
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Sqrt)
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Abs)
    }

    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Log)
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, Unary::Exp)
    }

    pub fn clamp_max(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary(a, Unary::ClampMax(c))
    }

    /// Element-wise `sqrt(re² + im² + eps)`. The derivative at an exact zero
    /// magnitude is taken as zero.
    pub fn magnitude(&mut self, re: NodeId, im: NodeId, eps: f64) -> Result<NodeId> {
        if eps < 0.0 {
            return Err(invalid("magnitude", format!("eps must be nonnegative, got {eps}")));
        }
        let (ia, ib, v) = self.binary(re, im, "magnitude", |x, y| (x * x + y * y + eps).sqrt())?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(v, Op::Magnitude(ia, ib), rg))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let rg = self.rg(ia) || self.rg(ib);
        Ok(self.push(v, Op::MatMul(ia, ib), rg))
    }

    /// Adds `b[n]` to every length-`n` row of `x[..., n]`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (ix, ib) = (self.idx(x)?, self.idx(b)?);
        let (xv, bv) = (&self.nodes[ix].value, &self.nodes[ib].value);
        let n = *xv.shape().last().unwrap();
        if bv.shape() != [n] {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut v = xv.clone();
        for row in v.data_mut().chunks_mut(n) {
            for (o, &bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let rg = self.rg(ix) || self.rg(ib);
        Ok(self.push(v, Op::AddBias(ix, ib), rg))
    }

    /// Adds `b[c]` to channel `c` of `x[batch, c, ...]`.
    pub fn add_channel_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (ix, ib) = (self.idx(x)?, self.idx(b)?);
        let (xv, bv) = (&self.nodes[ix].value, &self.nodes[ib].value);
        if xv.shape().len() < 2 || bv.shape() != [xv.shape()[1]] {
            return Err(shape_err("add_channel_bias", xv.shape(), bv.shape()));
        }
        let c = xv.shape()[1];
        let plane: usize = xv.shape()[2..].iter().product();
        let mut v = xv.clone();
        for (k, chunk) in v.data_mut().chunks_mut(plane).enumerate() {
            let bb = bv.data()[k % c];
            chunk.iter_mut().for_each(|o| *o += bb);
        }
        let rg = self.rg(ix) || self.rg(ib);
        Ok(self.push(v, Op::AddChannelBias(ix, ib), rg))
    }

    /// Multiplies row `i` of `x[b, ...]` by `s[i]`.
    pub fn scale_rows(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (ix, is) = (self.idx(x)?, self.idx(s)?);
        let (xv, sv) = (&self.nodes[ix].value, &self.nodes[is].value);
        if sv.shape() != [xv.shape()[0]] {
            return Err(shape_err("scale_rows", xv.shape(), sv.shape()));
        }
        let row = xv.numel() / xv.shape()[0];
        let mut v = xv.clone();
        for (chunk, &k) in v.data_mut().chunks_mut(row).zip(sv.data()) {
            chunk.iter_mut().for_each(|o| *o *= k);
        }
        let rg = self.rg(ix) || self.rg(is);
        Ok(self.push(v, Op::ScaleRows(ix, is), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = Tensor::scalar(self.nodes[ia].value.sum());
        let rg = self.rg(ia);
        Ok(self.push(v, Op::Sum(ia), rg))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a)?.numel() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sums `x[b, ...]` over every axis but the first, giving `[b]`.
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let xv = &self.nodes[ia].value;
        let b = xv.shape()[0];
        let row = xv.numel() / b;
        let data = xv.data().chunks(row).map(|c| c.iter().sum()).collect();
        let v = Tensor::from_parts(vec![b], data);
        let rg = self.rg(ia);
        Ok(self.push(v, Op::RowSum(ia), rg))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.reshape(shape)?;
        let rg = self.rg(ia);
        Ok(self.push(v, Op::Reshape(ia), rg))
    }

    pub fn permute(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.permute(perm)?;
        let rg = self.rg(ia);
        Ok(self.push(v, Op::Permute(ia, perm.to_vec()), rg))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let tensors: Vec<&Tensor> = idx.iter().map(|&i| &self.nodes[i].value).collect();
        let v = Tensor::concat(&tensors, axis)?;
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(v, Op::Concat(idx, axis), rg))
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.slice_axis(axis, start, len)?;
        let rg = self.rg(ia);
        Ok(self.push(
            v,
            Op::Slice {
                input: ia,
                axis,
                start,
            },
            rg,
        ))
    }

    /// Cross-correlation of `x[b, c, t, f]` with `w[o, c, kt, kf]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, geom: Conv2dGeom) -> Result<NodeId> {
        let (ix, iw) = (self.idx(x)?, self.idx(w)?);
        let (xv, wv) = (&self.nodes[ix].value, &self.nodes[iw].value);
        let d = conv_dims(xv.shape(), wv.shape(), &geom)?;
        let mut out = vec![0.0; d.b * d.o * d.ot * d.of];
        conv::conv_forward(xv.data(), wv.data(), &mut out, d, &geom);
        let v = Tensor::from_parts(vec![d.b, d.o, d.ot, d.of], out);
        let rg = self.rg(ix) || self.rg(iw);
        Ok(self.push(v, Op::Conv2d { x: ix, w: iw, geom }, rg))
    }

    /// Transposed convolution of `x[b, cin, t, f]` with `w[cin, cout, kt, kf]`.
    pub fn deconv2d(&mut self, x: NodeId, w: NodeId, geom: Conv2dGeom) -> Result<NodeId> {
        let (ix, iw) = (self.idx(x)?, self.idx(w)?);
        let (xv, wv) = (&self.nodes[ix].value, &self.nodes[iw].value);
        let d = deconv_dims(xv.shape(), wv.shape(), &geom)?;
        let mut out = vec![0.0; d.b * d.c * d.it * d.if_];
        conv::conv_backward_input(xv.data(), wv.data(), &mut out, d, &geom);
        let v = Tensor::from_parts(vec![d.b, d.c, d.it, d.if_], out);
        let rg = self.rg(ix) || self.rg(iw);
        Ok(self.push(v, Op::Deconv2d { x: ix, w: iw, geom }, rg))
    }

    /// Records a precomputed output of `op` applied to `inputs`.
    pub fn custom(&mut self, inputs: &[NodeId], output: Tensor, op: Box<dyn CustomOp>) -> Result<NodeId> {
        let idx: Vec<usize> = inputs.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let rg = idx.iter().any(|&i| self.rg(i));
        Ok(self.push(output, Op::Custom(idx, op), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let li = self.idx(loss)?;
        let lv = &self.nodes[li].value;
        if !lv.is_scalar() {
            return Err(Error::Graph(format!("loss must be a scalar, got shape {:?}", lv.shape())));
        }
        lv.check_finite("loss")?;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=li).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Param | Op::Variable) {
                grads[i] = Some(g);
            }
        }

        let mut params = HashMap::new();
        for (&key, &i) in &self.param_nodes {
            let g = grads[i]
                .take()
                .unwrap_or_else(|| Tensor::zeros(self.nodes[i].value.shape()));
            params.insert(key, g);
        }
        Ok(Gradients {
            graph: self.id,
            primary_store: self.primary_store,
            nodes: grads,
            params,
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Constant | Op::Variable | Op::Param => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                self.acc(grads, *a, || g.mul(val(*b)).expect("shape"));
                self.acc(grads, *b, || g.mul(val(*a)).expect("shape"));
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                self.acc(grads, *a, || g.zip_with(bv, "div", |gg, y| gg / y).expect("shape"));
                self.acc(grads, *b, || {
                    let mut t = g.clone();
                    for ((o, &x), &y) in t.data_mut().iter_mut().zip(av.data()).zip(bv.data()) {
                        *o *= -x / (y * y);
                    }
                    t
                });
            }
            Op::Scale(a, k) => self.acc(grads, *a, || g.scale(*k)),
            Op::AddScalar(a) => self.acc(grads, *a, || g.clone()),
            Op::Unary(a, u) => {
                let x = val(*a);
                self.acc(grads, *a, || {
                    let mut t = g.clone();
                    for ((o, &xx), &yy) in t.data_mut().iter_mut().zip(x.data()).zip(node.value.data()) {
                        *o *= u.deriv(xx, yy);
                    }
                    t
                });
            }
            Op::Magnitude(a, b) => {
                let m = &node.value;
                for part in [*a, *b] {
                    let p = val(part);
                    self.acc(grads, part, || {
                        let mut t = g.clone();
                        for ((o, &pp), &mm) in t.data_mut().iter_mut().zip(p.data()).zip(m.data()) {
                            *o = if mm > 0.0 { *o * pp / mm } else { 0.0 };
                        }
                        t
                    });
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = tensor::matmul_dims(av.shape(), bv.shape())?;
                self.acc(grads, *a, || {
                    let mut out = vec![0.0; m * k];
                    tensor::matmul_bt_acc(g.data(), bv.data(), &mut out, m, n, k);
                    Tensor::from_parts(vec![m, k], out)
                });
                self.acc(grads, *b, || {
                    let mut out = vec![0.0; k * n];
                    tensor::matmul_at_acc(av.data(), g.data(), &mut out, m, k, n);
                    Tensor::from_parts(vec![k, n], out)
                });
            }
            Op::AddBias(x, b) => {
                self.acc(grads, *x, || g.clone());
                let n = val(*b).numel();
                self.acc(grads, *b, || {
                    let mut out = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (o, v) in out.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    Tensor::from_parts(vec![n], out)
                });
            }
            Op::AddChannelBias(x, b) => {
                self.acc(grads, *x, || g.clone());
                let c = val(*b).numel();
                let plane: usize = g.shape()[2..].iter().product();
                self.acc(grads, *b, || {
                    let mut out = vec![0.0; c];
                    for (k, chunk) in g.data().chunks(plane).enumerate() {
                        out[k % c] += chunk.iter().sum::<f64>();
                    }
                    Tensor::from_parts(vec![c], out)
                });
            }
            Op::ScaleRows(x, s) => {
                let (xv, sv) = (val(*x), val(*s));
                let row = xv.numel() / sv.numel();
                self.acc(grads, *x, || {
                    let mut t = g.clone();
                    for (chunk, &k) in t.data_mut().chunks_mut(row).zip(sv.data()) {
                        chunk.iter_mut().for_each(|o| *o *= k);
                    }
                    t
                });
                self.acc(grads, *s, || {
                    let data = g
                        .data()
                        .chunks(row)
                        .zip(xv.data().chunks(row))
                        .map(|(gc, xc)| gc.iter().zip(xc).map(|(a, b)| a * b).sum())
                        .collect();
                    Tensor::from_parts(sv.shape().to_vec(), data)
                });
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                self.acc(grads, *a, || Tensor::full(val(*a).shape(), gv));
            }
            Op::RowSum(a) => {
                let xv = val(*a);
                let row = xv.numel() / xv.shape()[0];
                self.acc(grads, *a, || {
                    let mut data = Vec::with_capacity(xv.numel());
                    for &gv in g.data() {
                        data.extend(std::iter::repeat_n(gv, row));
                    }
                    Tensor::from_parts(xv.shape().to_vec(), data)
                });
            }
            Op::Reshape(a) => self.acc(grads, *a, || Tensor::from_parts(val(*a).shape().to_vec(), g.data().to_vec())),
            Op::Permute(a, perm) => {
                let mut inv = vec![0; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    inv[p] = k;
                }
                self.acc(grads, *a, || g.permute(&inv).expect("permutation"));
            }
            Op::Concat(parts, axis) => {
                let mut start = 0;
                for &p in parts {
                    let len = val(p).shape()[*axis];
                    self.acc(grads, p, || g.slice_axis(*axis, start, len).expect("slice"));
                    start += len;
                }
            }
            Op::Slice { input, axis, start } => {
                if self.rg(*input) {
                    let target = grads[*input].get_or_insert_with(|| Tensor::zeros(val(*input).shape()));
                    add_into_slice(target, g, *axis, *start);
                }
            }
            Op::Conv2d { x, w, geom } => {
                let (xv, wv) = (val(*x), val(*w));
                let d = conv_dims(xv.shape(), wv.shape(), geom)?;
                self.acc(grads, *x, || {
                    let mut out = vec![0.0; xv.numel()];
                    conv::conv_backward_input(g.data(), wv.data(), &mut out, d, geom);
                    Tensor::from_parts(xv.shape().to_vec(), out)
                });
                self.acc(grads, *w, || {
                    let mut out = vec![0.0; wv.numel()];
                    conv::conv_backward_weight(xv.data(), g.data(), &mut out, d, geom);
                    Tensor::from_parts(wv.shape().to_vec(), out)
                });
            }
            Op::Deconv2d { x, w, geom } => {
                // y = Aᵀx, so ∂x = A g and ∂w comes from the conv weight kernel with roles swapped.
                let (xv, wv) = (val(*x), val(*w));
                let d = deconv_dims(xv.shape(), wv.shape(), geom)?;
                self.acc(grads, *x, || {
                    let mut out = vec![0.0; xv.numel()];
                    conv::conv_forward(g.data(), wv.data(), &mut out, d, geom);
                    Tensor::from_parts(xv.shape().to_vec(), out)
                });
                self.acc(grads, *w, || {
                    let mut out = vec![0.0; wv.numel()];
                    conv::conv_backward_weight(g.data(), xv.data(), &mut out, d, geom);
                    Tensor::from_parts(wv.shape().to_vec(), out)
                });
            }
            Op::Custom(inputs, op) => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&j| val(j)).collect();
                let gs = op.backward(&vals, &node.value, g)?;
                if gs.len() != inputs.len() {
                    return Err(Error::Graph(format!("{} returned {} gradients for {} inputs", op.name(), gs.len(), inputs.len())));
                }
                for (&j, gj) in inputs.iter().zip(gs) {
                    if let Some(gj) = gj {
                        if gj.shape() != val(j).shape() {
                            return Err(shape_err("custom backward", val(j).shape(), gj.shape()));
                        }
                        self.acc(grads, j, || gj);
                    }
                }
            }
        }
        Ok(())
    }

    fn acc(&self, grads: &mut [Option<Tensor>], j: usize, make: impl FnOnce() -> Tensor) {
        if !self.nodes[j].requires_grad {
            return;
        }
        let t = make();
        match &mut grads[j] {
            Some(existing) => existing.add_assign(&t),
            slot => *slot = Some(t),
        }
    }
}

fn add_into_slice(target: &mut Tensor, g: &Tensor, axis: usize, start: usize) {
    let shape = target.shape().to_vec();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = g.shape()[axis];
    let extent = shape[axis];
    let td = target.data_mut();
    for o in 0..outer {
        let dst = &mut td[(o * extent + start) * inner..][..len * inner];
        let src = &g.data()[o * len * inner..][..len * inner];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += s;
        }
    }
}

fn conv_dims(x: &[usize], w: &[usize], geom: &Conv2dGeom) -> Result<ConvDims> {
    if x.len() != 4 || w.len() != 4 || x[1] != w[1] || w[2] != geom.time.kernel || w[3] != geom.freq.kernel {
        return Err(shape_err("conv2d", x, w));
    }
    let (ot, of) = geom
        .conv_out(x[2], x[3])
        .ok_or_else(|| invalid("conv2d", format!("input {x:?} smaller than kernel {w:?}")))?;
    Ok(ConvDims {
        b: x[0],
        c: x[1],
        it: x[2],
        if_: x[3],
        o: w[0],
        ot,
        of,
    })
}

/// Dimensions of the forward convolution whose adjoint is this deconvolution.
fn deconv_dims(x: &[usize], w: &[usize], geom: &Conv2dGeom) -> Result<ConvDims> {
    if x.len() != 4 || w.len() != 4 || x[1] != w[0] || w[2] != geom.time.kernel || w[3] != geom.freq.kernel {
        return Err(shape_err("deconv2d", x, w));
    }
    let (t, f) = geom
        .deconv_out(x[2], x[3])
        .ok_or_else(|| invalid("deconv2d", format!("degenerate output for input {x:?}")))?;
    Ok(ConvDims {
        b: x[0],
        c: w[1],
        it: t,
        if_: f,
        o: w[0],
        ot: x[2],
        of: x[3],
    })
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    graph: u64,
    primary_store: Option<u64>,
    nodes: Vec<Option<Tensor>>,
    params: HashMap<(u64, ParamId), Tensor>,
}

impl Gradients {
    /// Gradient of a [`Graph::variable`] input.
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        if id.graph != self.graph {
            return None;
        }
        self.nodes.get(id.index).and_then(|g| g.as_ref())
    }

    /// Gradient of a parameter of the first store bound on the graph.
    pub fn param(&self, pid: ParamId) -> Option<&Tensor> {
        self.params.get(&(self.primary_store?, pid))
    }

    /// Gradient of a parameter of a specific store.
    pub fn param_in(&self, store: &ParamStore, pid: ParamId) -> Option<&Tensor> {
        self.params.get(&(store.uid(), pid))
    }

    /// Gradients of the first store's parameters in id order.
    pub fn params(&self) -> Vec<(ParamId, &Tensor)> {
        let Some(primary) = self.primary_store else { return Vec::new() };
        let mut v: Vec<_> = self
            .params
            .iter()
            .filter(|((s, _), _)| *s == primary)
            .map(|((_, k), t)| (*k, t))
            .collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::new(&[3], vec![1.0, -2.0, 3.0]).unwrap());
        let sq = g.square(x).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn magnitude_squared_gradient() {
        let mut g = Graph::new();
        let re = g.variable(Tensor::new(&[2], vec![0.5, -1.5]).unwrap());
        let im = g.variable(Tensor::new(&[2], vec![2.0, 0.25]).unwrap());
        let m = g.magnitude(re, im, 0.0).unwrap();
        let m2 = g.square(m).unwrap();
        let loss = g.sum(m2).unwrap();
        let grads = g.backward(loss).unwrap();
        let gr = grads.wrt(re).unwrap().data();
        let gi = grads.wrt(im).unwrap().data();
        assert!((gr[0] - 1.0).abs() < 1e-12 && (gr[1] + 3.0).abs() < 1e-12);
        assert!((gi[0] - 4.0).abs() < 1e-12 && (gi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn magnitude_at_origin_has_finite_gradient() {
        for eps in [0.0, 1e-12] {
            let mut g = Graph::new();
            let re = g.variable(Tensor::zeros(&[1]));
            let im = g.variable(Tensor::zeros(&[1]));
            let m = g.magnitude(re, im, eps).unwrap();
            let grads = g.backward(m).unwrap();
            assert!(grads.wrt(re).unwrap().data()[0].is_finite());
            assert_eq!(grads.wrt(re).unwrap().data()[0], 0.0);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_and_foreign_nodes() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Graph(_))));
        let mut other = Graph::new();
        let y = other.variable(Tensor::zeros(&[1]));
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn params_receive_gradients_with_their_shape() {
        let mut store = ParamStore::seeded(0);
        let w = store.add("w", &[3, 2], 1.0);
        let unused = store.add("u", &[4], 1.0);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 3], 1.0));
        let wn = g.param(&store, w).unwrap();
        let _ = g.param(&store, unused).unwrap();
        let y = g.matmul(x, wn).unwrap();
        let loss = g.sum(y).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.param(w).unwrap().shape(), &[3, 2]);
        assert_eq!(grads.param(unused).unwrap(), &Tensor::zeros(&[4]));
    }

    #[test]
    fn reused_param_binds_once() {
        let mut store = ParamStore::seeded(0);
        let w = store.add("w", &[1], 1.0);
        let mut g = Graph::new();
        let a = g.param(&store, w).unwrap();
        let b = g.param(&store, w).unwrap();
        assert_eq!(a, b);
        let p = g.mul(a, b).unwrap();
        let grads = g.backward(p).unwrap();
        let wv = store.get(w).unwrap().data()[0];
        assert!((grads.param(w).unwrap().data()[0] - 2.0 * wv).abs() < 1e-15);
    }
}
