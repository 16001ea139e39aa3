//! Tape of recorded operations and the `Tensor` handle into it.
//!
//! A [`Graph`] is built fresh for every forward pass. Every operation appends
//! a node holding its value and enough context to run the chain rule in
//! reverse; [`Graph::backward`] walks the tape from the loss back to the
//! leaves and accumulates gradients.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParamStore};
use crate::shape::{broadcast_index_map, broadcast_shape, numel, split_axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Param,
    Binary {
        kind: BinaryKind,
        a: usize,
        b: usize,
    },
    /// Elementwise map; `deriv` holds df/dx at each input element.
    Unary {
        a: usize,
        deriv: Vec<f64>,
    },
    MatMul {
        a: usize,
        b: usize,
    },
    BatchMatMul {
        a: usize,
        b: usize,
    },
    TransposeLast2 {
        a: usize,
    },
    Reshape {
        a: usize,
    },
    Softmax {
        a: usize,
        axis: usize,
    },
    LogSoftmax {
        a: usize,
        axis: usize,
    },
    LogSumExp {
        a: usize,
        axis: usize,
    },
    Sum {
        a: usize,
        axis: usize,
        scale: f64,
    },
    SumAll {
        a: usize,
    },
    Concat {
        inputs: Vec<usize>,
        axis: usize,
    },
    Slice {
        a: usize,
        axis: usize,
        start: usize,
        end: usize,
    },
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Gather {
        a: usize,
        ids: Vec<usize>,
    },
    Where {
        cond: Vec<bool>,
        a: usize,
        b: usize,
    },
}

pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

#[derive(Default)]
struct Inner {
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, usize>,
    grads: Vec<Option<Vec<f64>>>,
}

/// A define-by-run computation graph.
#[derive(Default)]
pub struct Graph {
    inner: RefCell<Inner>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Tensor<'g> {
    pub(crate) graph: &'g Graph,
    pub(crate) id: usize,
}

impl std::fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AutodiffError::NonFinite { op })
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn push(&self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Tensor<'_> {
        debug_assert_eq!(numel(&shape), value.len());
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Tensor {
            graph: self,
            id: inner.nodes.len() - 1,
        }
    }

    pub(crate) fn with_node<R>(&self, id: usize, f: impl FnOnce(&Node) -> R) -> R {
        f(&self.inner.borrow().nodes[id])
    }

    pub(crate) fn with_nodes<R>(&self, f: impl FnOnce(&[Node]) -> R) -> R {
        f(&self.inner.borrow().nodes)
    }

    /// A leaf tensor. Gradients are kept for it when `requires_grad` is set.
    pub fn leaf(&self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Tensor<'_>> {
        if numel(shape) != data.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "leaf",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        check_finite("leaf", &data)?;
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    pub fn constant(&self, shape: &[usize], data: Vec<f64>) -> Result<Tensor<'_>> {
        self.leaf(shape, data, false)
    }

    pub fn scalar(&self, value: f64) -> Result<Tensor<'_>> {
        self.leaf(&[], vec![value], false)
    }

    pub fn full(&self, shape: &[usize], value: f64) -> Result<Tensor<'_>> {
        self.leaf(shape, vec![value; numel(shape)], false)
    }

    /// Bring a stored parameter into the graph. Repeated calls for the same
    /// parameter return the same node.
    pub fn param(&self, store: &ParamStore, id: ParamId) -> Tensor<'_> {
        if let Some(&node) = self.inner.borrow().param_nodes.get(&id.0) {
            return Tensor { graph: self, id: node };
        }
        let p = store.get(id);
        let t = self.push(p.shape.clone(), p.data.clone(), Op::Param, true);
        self.inner.borrow_mut().param_nodes.insert(id.0, t.id);
        t
    }

    /// Reverse pass from a scalar loss. Gradients are stored on the graph
    /// and read back with [`Tensor::grad`] or [`Graph::param_grads`].
    pub fn backward(&self, loss: Tensor<'_>) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        let Inner { nodes, grads, .. } = &mut *inner;
        let root = &nodes[loss.id];
        if root.value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(root.shape.clone()));
        }
        grads.clear();
        grads.resize(nodes.len(), None);
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                grads[id] = Some(g);
                continue;
            }
            backprop_node(nodes, grads, id, &g);
            grads[id] = Some(g);
        }
        Ok(())
    }

    pub(crate) fn grad_of(&self, id: usize) -> Option<Vec<f64>> {
        let inner = self.inner.borrow();
        if !inner.nodes[id].requires_grad {
            return None;
        }
        match inner.grads.get(id) {
            Some(Some(g)) => Some(g.clone()),
            Some(None) => Some(vec![0.0; inner.nodes[id].value.len()]),
            None => None,
        }
    }

    /// Gradients of every parameter in `store`, zero-filled for parameters
    /// the graph never touched.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        let inner = self.inner.borrow();
        store
            .iter()
            .map(|(id, p)| match inner.param_nodes.get(&id.0) {
                Some(&node) => match inner.grads.get(node) {
                    Some(Some(g)) => g.clone(),
                    _ => vec![0.0; p.data.len()],
                },
                None => vec![0.0; p.data.len()],
            })
            .collect()
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], id: usize, f: impl FnOnce(&mut [f64])) {
    if !nodes[id].requires_grad {
        return;
    }
    let slot = grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()]);
    f(slot);
}

fn backprop_node(nodes: &[Node], grads: &mut [Option<Vec<f64>>], id: usize, g: &[f64]) {
    let node = &nodes[id];
    match &node.op {
        Op::Leaf | Op::Param => {}
        Op::Binary { kind, a, b } => {
            let (a, b) = (*a, *b);
            let out_shape = &node.shape;
            let ia = broadcast_index_map(&nodes[a].shape, out_shape);
            let ib = broadcast_index_map(&nodes[b].shape, out_shape);
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            let idx = |map: &Option<Vec<usize>>, i: usize| map.as_ref().map_or(i, |m| m[i]);
            accumulate(grads, nodes, a, |ga| {
                for (i, gi) in g.iter().enumerate() {
                    let d = match kind {
                        BinaryKind::Add | BinaryKind::Sub => *gi,
                        BinaryKind::Mul => gi * bv[idx(&ib, i)],
                        BinaryKind::Div => gi / bv[idx(&ib, i)],
                    };
                    ga[idx(&ia, i)] += d;
                }
            });
            accumulate(grads, nodes, b, |gb| {
                for (i, gi) in g.iter().enumerate() {
                    let d = match kind {
                        BinaryKind::Add => *gi,
                        BinaryKind::Sub => -gi,
                        BinaryKind::Mul => gi * av[idx(&ia, i)],
                        BinaryKind::Div => {
                            let bi = bv[idx(&ib, i)];
                            -gi * av[idx(&ia, i)] / (bi * bi)
                        }
                    };
                    gb[idx(&ib, i)] += d;
                }
            });
        }
        Op::Unary { a, deriv } => accumulate(grads, nodes, *a, |ga| {
            for ((ga, gi), d) in ga.iter_mut().zip(g).zip(deriv) {
                *ga += gi * d;
            }
        }),
        Op::MatMul { a, b } => {
            let (a, b) = (*a, *b);
            let k = *nodes[b].shape.first().unwrap_or(&1);
            let n = nodes[b].shape.get(1).copied().unwrap_or(1);
            let m = nodes[a].value.len() / k.max(1);
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            accumulate(grads, nodes, a, |ga| {
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        let mut s = 0.0;
                        for j in 0..n {
                            s += grow[j] * brow[j];
                        }
                        ga[i * k + p] += s;
                    }
                }
            });
            accumulate(grads, nodes, b, |gb| {
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = av[i * k + p];
                        let gbrow = &mut gb[p * n..(p + 1) * n];
                        for j in 0..n {
                            gbrow[j] += aip * grow[j];
                        }
                    }
                }
            });
        }
        Op::BatchMatMul { a, b } => {
            let (a, b) = (*a, *b);
            let sa = &nodes[a].shape;
            let sb = &nodes[b].shape;
            let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let av = &nodes[a].value;
            let bv = &nodes[b].value;
            accumulate(grads, nodes, a, |ga| {
                for t in 0..bs {
                    for i in 0..m {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[t * m * n + i * n + j] * bv[t * k * n + p * n + j];
                            }
                            ga[t * m * k + i * k + p] += s;
                        }
                    }
                }
            });
            accumulate(grads, nodes, b, |gb| {
                for t in 0..bs {
                    for i in 0..m {
                        for p in 0..k {
                            let aip = av[t * m * k + i * k + p];
                            for j in 0..n {
                                gb[t * k * n + p * n + j] += aip * g[t * m * n + i * n + j];
                            }
                        }
                    }
                }
            });
        }
        Op::TransposeLast2 { a } => {
            let s = &nodes[*a].shape;
            let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
            let batches = nodes[*a].value.len() / (r * c).max(1);
            accumulate(grads, nodes, *a, |ga| {
                for t in 0..batches {
                    for i in 0..r {
                        for j in 0..c {
                            ga[t * r * c + i * c + j] += g[t * r * c + j * r + i];
                        }
                    }
                }
            });
        }
        Op::Reshape { a } => accumulate(grads, nodes, *a, |ga| {
            for (x, y) in ga.iter_mut().zip(g) {
                *x += y;
            }
        }),
        Op::Softmax { a, axis } => {
            let (outer, n, inner) = split_axis(&nodes[*a].shape, *axis);
            let y = &node.value;
            accumulate(grads, nodes, *a, |ga| {
                for o in 0..outer {
                    for q in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + q;
                        let mut dot = 0.0;
                        for j in 0..n {
                            dot += g[at(j)] * y[at(j)];
                        }
                        for j in 0..n {
                            ga[at(j)] += y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            });
        }
        Op::LogSoftmax { a, axis } => {
            let (outer, n, inner) = split_axis(&nodes[*a].shape, *axis);
            let y = &node.value;
            accumulate(grads, nodes, *a, |ga| {
                for o in 0..outer {
                    for q in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + q;
                        let mut gsum = 0.0;
                        for j in 0..n {
                            gsum += g[at(j)];
                        }
                        for j in 0..n {
                            ga[at(j)] += g[at(j)] - y[at(j)].exp() * gsum;
                        }
                    }
                }
            });
        }
        Op::LogSumExp { a, axis } => {
            let (outer, n, inner) = split_axis(&nodes[*a].shape, *axis);
            let x = &nodes[*a].value;
            let y = &node.value;
            accumulate(grads, nodes, *a, |ga| {
                for o in 0..outer {
                    for q in 0..inner {
                        let r = o * inner + q;
                        for j in 0..n {
                            let at = o * n * inner + j * inner + q;
                            ga[at] += g[r] * (x[at] - y[r]).exp();
                        }
                    }
                }
            });
        }
        Op::Sum { a, axis, scale } => {
            let (outer, n, inner) = split_axis(&nodes[*a].shape, *axis);
            accumulate(grads, nodes, *a, |ga| {
                for o in 0..outer {
                    for j in 0..n {
                        for q in 0..inner {
                            ga[o * n * inner + j * inner + q] += g[o * inner + q] * scale;
                        }
                    }
                }
            });
        }
        Op::SumAll { a } => accumulate(grads, nodes, *a, |ga| {
            for x in ga.iter_mut() {
                *x += g[0];
            }
        }),
        Op::Concat { inputs, axis } => {
            let (outer, _, inner) = split_axis(&node.shape, *axis);
            let total = node.shape[*axis];
            let mut offset = 0;
            for &input in inputs {
                let n = nodes[input].shape[*axis];
                accumulate(grads, nodes, input, |gi| {
                    for o in 0..outer {
                        let src = &g[(o * total + offset) * inner..(o * total + offset + n) * inner];
                        let dst = &mut gi[o * n * inner..(o + 1) * n * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
                offset += n;
            }
        }
        Op::Slice { a, axis, start, end } => {
            let (outer, total, inner) = split_axis(&nodes[*a].shape, *axis);
            let n = end - start;
            accumulate(grads, nodes, *a, |ga| {
                for o in 0..outer {
                    let dst = &mut ga[(o * total + start) * inner..(o * total + end) * inner];
                    let src = &g[o * n * inner..(o + 1) * n * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            });
        }
        Op::Embedding { table, ids } => {
            let d = nodes[*table].shape[1];
            accumulate(grads, nodes, *table, |gt| {
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..d {
                        gt[id * d + c] += g[r * d + c];
                    }
                }
            });
        }
        Op::Gather { a, ids } => {
            let n = *nodes[*a].shape.last().unwrap_or(&1);
            accumulate(grads, nodes, *a, |ga| {
                for (r, &id) in ids.iter().enumerate() {
                    ga[r * n + id] += g[r];
                }
            });
        }
        Op::Where { cond, a, b } => {
            accumulate(grads, nodes, *a, |ga| {
                for (i, &c) in cond.iter().enumerate() {
                    if c {
                        ga[i] += g[i];
                    }
                }
            });
            accumulate(grads, nodes, *b, |gb| {
                for (i, &c) in cond.iter().enumerate() {
                    if !c {
                        gb[i] += g[i];
                    }
                }
            });
        }
    }
}

impl<'g> Tensor<'g> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.with_node(self.id, |n| n.shape.clone())
    }

    pub fn numel(&self) -> usize {
        self.graph.with_node(self.id, |n| n.value.len())
    }

    /// Row-major copy of the forward value.
    pub fn value(&self) -> Vec<f64> {
        self.graph.with_node(self.id, |n| n.value.clone())
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> f64 {
        self.graph.with_node(self.id, |n| n.value[0])
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.with_node(self.id, |n| n.requires_grad)
    }

    /// Gradient after [`Graph::backward`]; `None` for tensors that do not
    /// require gradients.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.graph.grad_of(self.id)
    }

    fn binary(self, other: Tensor<'g>, kind: BinaryKind, name: &'static str) -> Result<Tensor<'g>> {
        let (shape, value, rg) = self.graph.with_nodes(|nodes| {
            let (na, nb) = (&nodes[self.id], &nodes[other.id]);
            let shape = broadcast_shape(&na.shape, &nb.shape).ok_or_else(|| AutodiffError::ShapeMismatch {
                op: name,
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            })?;
            let f = |x: f64, y: f64| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / y,
            };
            let value: Vec<f64> = if na.shape == nb.shape {
                na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect()
            } else {
                let ia = broadcast_index_map(&na.shape, &shape);
                let ib = broadcast_index_map(&nb.shape, &shape);
                (0..numel(&shape))
                    .map(|i| {
                        let x = na.value[ia.as_ref().map_or(i, |m| m[i])];
                        let y = nb.value[ib.as_ref().map_or(i, |m| m[i])];
                        f(x, y)
                    })
                    .collect()
            };
            Ok::<_, AutodiffError>((shape, value, na.requires_grad || nb.requires_grad))
        })?;
        check_finite(name, &value)?;
        Ok(self.graph.push(
            shape,
            value,
            Op::Binary {
                kind,
                a: self.id,
                b: other.id,
            },
            rg,
        ))
    }

    /// Elementwise sum with trailing-dimension (numpy-style) broadcasting.
    pub fn add(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(other, BinaryKind::Add, "add")
    }

    pub fn sub(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    pub fn mul(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    pub fn div(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        self.binary(other, BinaryKind::Div, "div")
    }

    /// Elementwise map with a user supplied local derivative. `f` returns
    /// `(f(x), f'(x))`.
    pub fn map(self, name: &'static str, f: impl Fn(f64) -> (f64, f64)) -> Result<Tensor<'g>> {
        let (shape, value, deriv, rg) = self.graph.with_node(self.id, |n| {
            let (value, deriv): (Vec<f64>, Vec<f64>) = n.value.iter().map(|&x| f(x)).unzip();
            (n.shape.clone(), value, deriv, n.requires_grad)
        });
        check_finite(name, &value)?;
        Ok(self.graph.push(shape, value, Op::Unary { a: self.id, deriv }, rg))
    }

    pub fn matmul(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        let (shape, value, rg) = self.graph.with_nodes(|nodes| {
            let (na, nb) = (&nodes[self.id], &nodes[other.id]);
            let mismatch = || AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            };
            if nb.shape.len() != 2 || na.shape.is_empty() || *na.shape.last().unwrap() != nb.shape[0] {
                return Err(mismatch());
            }
            let (k, n) = (nb.shape[0], nb.shape[1]);
            let m = na.value.len() / k.max(1);
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let orow = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = na.value[i * k + p];
                    let brow = &nb.value[p * n..(p + 1) * n];
                    for j in 0..n {
                        orow[j] += aip * brow[j];
                    }
                }
            }
            let mut shape = na.shape.clone();
            *shape.last_mut().unwrap() = n;
            Ok((shape, out, na.requires_grad || nb.requires_grad))
        })?;
        check_finite("matmul", &value)?;
        Ok(self.graph.push(shape, value, Op::MatMul { a: self.id, b: other.id }, rg))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn batch_matmul(self, other: Tensor<'g>) -> Result<Tensor<'g>> {
        let (shape, value, rg) = self.graph.with_nodes(|nodes| {
            let (na, nb) = (&nodes[self.id], &nodes[other.id]);
            if na.shape.len() != 3 || nb.shape.len() != 3 || na.shape[0] != nb.shape[0] || na.shape[2] != nb.shape[1] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "batch_matmul",
                    lhs: na.shape.clone(),
                    rhs: nb.shape.clone(),
                });
            }
            let (bs, m, k, n) = (na.shape[0], na.shape[1], na.shape[2], nb.shape[2]);
            let mut out = vec![0.0; bs * m * n];
            for t in 0..bs {
                for i in 0..m {
                    for p in 0..k {
                        let aip = na.value[t * m * k + i * k + p];
                        for j in 0..n {
                            out[t * m * n + i * n + j] += aip * nb.value[t * k * n + p * n + j];
                        }
                    }
                }
            }
            Ok((vec![bs, m, n], out, na.requires_grad || nb.requires_grad))
        })?;
        check_finite("batch_matmul", &value)?;
        Ok(self.graph.push(shape, value, Op::BatchMatMul { a: self.id, b: other.id }, rg))
    }

    pub fn transpose_last2(self) -> Result<Tensor<'g>> {
        let (shape, value, rg) = self.graph.with_node(self.id, |n| {
            if n.shape.len() < 2 {
                return Err(AutodiffError::InvalidArgument {
                    op: "transpose_last2",
                    msg: format!("need rank >= 2, got {:?}", n.shape),
                });
            }
            let d = n.shape.len();
            let (r, c) = (n.shape[d - 2], n.shape[d - 1]);
            let batches = n.value.len() / (r * c).max(1);
            let mut out = vec![0.0; n.value.len()];
            for t in 0..batches {
                for i in 0..r {
                    for j in 0..c {
                        out[t * r * c + j * r + i] = n.value[t * r * c + i * c + j];
                    }
                }
            }
            let mut shape = n.shape.clone();
            shape.swap(d - 2, d - 1);
            Ok((shape, out, n.requires_grad))
        })?;
        Ok(self.graph.push(shape, value, Op::TransposeLast2 { a: self.id }, rg))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Tensor<'g>> {
        let (value, rg) = self.graph.with_node(self.id, |n| {
            if numel(shape) != n.value.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "reshape",
                    lhs: n.shape.clone(),
                    rhs: shape.to_vec(),
                });
            }
            Ok((n.value.clone(), n.requires_grad))
        })?;
        Ok(self.graph.push(shape.to_vec(), value, Op::Reshape { a: self.id }, rg))
    }

    /// Same value, cut off from the gradient flow.
    pub fn detach(self) -> Tensor<'g> {
        let (shape, value) = self.graph.with_node(self.id, |n| (n.shape.clone(), n.value.clone()));
        self.graph.push(shape, value, Op::Leaf, false)
    }

    pub(crate) fn axis_op(
        self,
        name: &'static str,
        axis: usize,
        f: impl Fn(&[f64], usize, usize, usize) -> Vec<f64>,
    ) -> Result<(Vec<f64>, bool)> {
        self.graph.with_node(self.id, |n| {
            if axis >= n.shape.len() {
                return Err(AutodiffError::InvalidArgument {
                    op: name,
                    msg: format!("axis {axis} out of range for shape {:?}", n.shape),
                });
            }
            let (outer, len, inner) = split_axis(&n.shape, axis);
            Ok((f(&n.value, outer, len, inner), n.requires_grad))
        })
    }
}
