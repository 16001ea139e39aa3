//! Elementwise, reduction and indexing primitives.

use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Op, Tensor};
use crate::shape::{numel, split_axis};

/// `log(1 + e^x)`, branching at |x| > 20.
pub fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
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

/// `log(softplus(x))` without underflow for very negative `x`.
pub fn log_softplus(x: f64) -> f64 {
    if x < -20.0 {
        x
    } else {
        softplus(x).ln()
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AutodiffError::NonFinite { op })
    }
}

impl<'g> Tensor<'g> {
    pub fn neg(self) -> Result<Tensor<'g>> {
        self.map("neg", |x| (-x, -1.0))
    }

    pub fn scale(self, c: f64) -> Result<Tensor<'g>> {
        self.map("scale", |x| (c * x, c))
    }

    pub fn add_scalar(self, c: f64) -> Result<Tensor<'g>> {
        self.map("add_scalar", |x| (x + c, 1.0))
    }

    pub fn powf(self, p: f64) -> Result<Tensor<'g>> {
        self.map("powf", |x| (x.powf(p), p * x.powf(p - 1.0)))
    }

    pub fn square(self) -> Result<Tensor<'g>> {
        self.map("square", |x| (x * x, 2.0 * x))
    }

    pub fn exp(self) -> Result<Tensor<'g>> {
        self.map("exp", |x| {
            let e = x.exp();
            (e, e)
        })
    }

    pub fn log(self) -> Result<Tensor<'g>> {
        self.map("log", |x| (x.ln(), 1.0 / x))
    }

    pub fn tanh(self) -> Result<Tensor<'g>> {
        self.map("tanh", |x| {
            let t = x.tanh();
            (t, 1.0 - t * t)
        })
    }

    pub fn sigmoid(self) -> Result<Tensor<'g>> {
        self.map("sigmoid", |x| {
            let s = sigmoid(x);
            (s, s * (1.0 - s))
        })
    }

    pub fn softplus(self) -> Result<Tensor<'g>> {
        self.map("softplus", |x| (softplus(x), sigmoid(x)))
    }

    pub fn log_softplus(self) -> Result<Tensor<'g>> {
        self.map("log_softplus", |x| {
            if x < -20.0 {
                (x, 1.0)
            } else {
                let sp = softplus(x);
                (sp.ln(), sigmoid(x) / sp)
            }
        })
    }

    pub fn relu(self) -> Result<Tensor<'g>> {
        self.map("relu", |x| if x > 0.0 { (x, 1.0) } else { (0.0, 0.0) })
    }

    fn push_checked(self, name: &'static str, op: Op, shape: Vec<usize>, value: Vec<f64>, rg: bool) -> Result<Tensor<'g>> {
        check_finite(name, &value)?;
        Ok(self.graph.push(shape, value, op, rg))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Tensor<'g>> {
        let (value, rg) = self.axis_op("softmax", axis, |x, outer, n, inner| {
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for q in 0..inner {
                    let at = |j: usize| o * n * inner + j * inner + q;
                    let max = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..n {
                        let e = (x[at(j)] - max).exp();
                        out[at(j)] = e;
                        total += e;
                    }
                    for j in 0..n {
                        out[at(j)] /= total;
                    }
                }
            }
            out
        })?;
        let shape = self.shape();
        self.push_checked("softmax", Op::Softmax { a: self.id, axis }, shape, value, rg)
    }

    pub fn log_softmax(self, axis: usize) -> Result<Tensor<'g>> {
        let (value, rg) = self.axis_op("log_softmax", axis, |x, outer, n, inner| {
            let mut out = vec![0.0; x.len()];
            for o in 0..outer {
                for q in 0..inner {
                    let at = |j: usize| o * n * inner + j * inner + q;
                    let max = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..n {
                        total += (x[at(j)] - max).exp();
                    }
                    let lse = max + total.ln();
                    for j in 0..n {
                        out[at(j)] = x[at(j)] - lse;
                    }
                }
            }
            out
        })?;
        let shape = self.shape();
        self.push_checked("log_softmax", Op::LogSoftmax { a: self.id, axis }, shape, value, rg)
    }

    /// `log sum exp` along `axis`, which is removed from the shape.
    pub fn logsumexp(self, axis: usize) -> Result<Tensor<'g>> {
        let (value, rg) = self.axis_op("logsumexp", axis, |x, outer, n, inner| {
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for q in 0..inner {
                    let at = |j: usize| o * n * inner + j * inner + q;
                    let max = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for j in 0..n {
                        total += (x[at(j)] - max).exp();
                    }
                    out[o * inner + q] = max + total.ln();
                }
            }
            out
        })?;
        let mut shape = self.shape();
        shape.remove(axis);
        self.push_checked("logsumexp", Op::LogSumExp { a: self.id, axis }, shape, value, rg)
    }

    fn reduce(self, name: &'static str, axis: usize, mean: bool) -> Result<Tensor<'g>> {
        let (value, rg) = self.axis_op(name, axis, |x, outer, n, inner| {
            let scale = if mean { 1.0 / n as f64 } else { 1.0 };
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for j in 0..n {
                    for q in 0..inner {
                        out[o * inner + q] += x[o * n * inner + j * inner + q];
                    }
                }
            }
            if mean {
                out.iter_mut().for_each(|v| *v *= scale);
            }
            out
        })?;
        let mut shape = self.shape();
        let n = shape.remove(axis);
        let scale = if mean { 1.0 / n as f64 } else { 1.0 };
        self.push_checked(name, Op::Sum { a: self.id, axis, scale }, shape, value, rg)
    }

    /// Sum along `axis`, which is removed from the shape.
    pub fn sum(self, axis: usize) -> Result<Tensor<'g>> {
        self.reduce("sum", axis, false)
    }

    pub fn mean(self, axis: usize) -> Result<Tensor<'g>> {
        self.reduce("mean", axis, true)
    }

    /// Sum of every element, as a scalar. Accumulates in row-major order.
    pub fn sum_all(self) -> Result<Tensor<'g>> {
        let (value, rg) = self.graph.with_node(self.id, |n| (n.value.iter().sum::<f64>(), n.requires_grad));
        check_finite("sum_all", &[value])?;
        Ok(self.graph.push(vec![], vec![value], Op::SumAll { a: self.id }, rg))
    }

    /// Contiguous range `start..end` of `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Tensor<'g>> {
        let shape = self.shape();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(AutodiffError::InvalidArgument {
                op: "slice",
                msg: format!("range {start}..{end} on axis {axis} of {shape:?}"),
            });
        }
        let (value, rg) = self.axis_op("slice", axis, |x, outer, total, inner| {
            let n = end - start;
            let mut out = Vec::with_capacity(outer * n * inner);
            for o in 0..outer {
                out.extend_from_slice(&x[(o * total + start) * inner..(o * total + end) * inner]);
            }
            out
        })?;
        let mut out_shape = shape;
        out_shape[axis] = end - start;
        Ok(self.graph.push(out_shape, value, Op::Slice { a: self.id, axis, start, end }, rg))
    }

    /// Gather one entry of the last axis per row: `[.., n] -> [..]`.
    pub fn gather_last(self, ids: &[usize]) -> Result<Tensor<'g>> {
        let shape = self.shape();
        let n = *shape.last().ok_or(AutodiffError::InvalidArgument {
            op: "gather_last",
            msg: "scalar input".into(),
        })?;
        let rows = numel(&shape) / n.max(1);
        if ids.len() != rows || ids.iter().any(|&i| i >= n) {
            return Err(AutodiffError::InvalidArgument {
                op: "gather_last",
                msg: format!("{} ids for {rows} rows of width {n}", ids.len()),
            });
        }
        let (value, rg) = self.graph.with_node(self.id, |node| {
            (
                ids.iter().enumerate().map(|(r, &i)| node.value[r * n + i]).collect::<Vec<_>>(),
                node.requires_grad,
            )
        });
        let out_shape = shape[..shape.len() - 1].to_vec();
        Ok(self.graph.push(out_shape, value, Op::Gather { a: self.id, ids: ids.to_vec() }, rg))
    }

    /// Elementwise select: `cond ? self : other`. Shapes must match.
    pub fn select(self, cond: &[bool], other: Tensor<'g>) -> Result<Tensor<'g>> {
        Graph::where_(cond, self, other)
    }
}

impl Graph {
    /// Elementwise `cond ? a : b` over equal shapes.
    pub fn where_<'g>(cond: &[bool], a: Tensor<'g>, b: Tensor<'g>) -> Result<Tensor<'g>> {
        let g = a.graph;
        let (shape, value, rg) = g.with_nodes(|nodes| {
            let (na, nb) = (&nodes[a.id], &nodes[b.id]);
            if na.shape != nb.shape || cond.len() != na.value.len() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "where",
                    lhs: na.shape.clone(),
                    rhs: nb.shape.clone(),
                });
            }
            let value = cond
                .iter()
                .zip(na.value.iter().zip(&nb.value))
                .map(|(&c, (&x, &y))| if c { x } else { y })
                .collect::<Vec<_>>();
            Ok((na.shape.clone(), value, na.requires_grad || nb.requires_grad))
        })?;
        Ok(g.push(
            shape,
            value,
            Op::Where {
                cond: cond.to_vec(),
                a: a.id,
                b: b.id,
            },
            rg,
        ))
    }

    /// Concatenate along `axis`; all other dimensions must agree.
    pub fn concat<'g>(&'g self, inputs: &[Tensor<'g>], axis: usize) -> Result<Tensor<'g>> {
        let first = inputs.first().ok_or(AutodiffError::InvalidArgument {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(AutodiffError::InvalidArgument {
                op: "concat",
                msg: format!("axis {axis} out of range for {base:?}"),
            });
        }
        let (shape, value, rg) = self.with_nodes(|nodes| {
            let mut total = 0;
            for t in inputs {
                let s = &nodes[t.id].shape;
                let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
                if !compatible {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat",
                        lhs: base.clone(),
                        rhs: s.clone(),
                    });
                }
                total += s[axis];
            }
            let (outer, _, inner) = split_axis(&base, axis);
            let mut out = Vec::with_capacity(outer * total * inner);
            for o in 0..outer {
                for t in inputs {
                    let n = nodes[t.id].shape[axis];
                    out.extend_from_slice(&nodes[t.id].value[o * n * inner..(o + 1) * n * inner]);
                }
            }
            let mut shape = base.clone();
            shape[axis] = total;
            Ok((shape, out, inputs.iter().any(|t| nodes[t.id].requires_grad)))
        })?;
        Ok(self.push(
            shape,
            value,
            Op::Concat {
                inputs: inputs.iter().map(|t| t.id).collect(),
                axis,
            },
            rg,
        ))
    }

    /// Rows of `table` (`[V, D]`) selected by `ids`: `[ids.len(), D]`.
    pub fn embedding<'g>(&'g self, table: Tensor<'g>, ids: &[usize]) -> Result<Tensor<'g>> {
        let shape = table.shape();
        if shape.len() != 2 || ids.iter().any(|&i| i >= shape[0]) {
            return Err(AutodiffError::InvalidArgument {
                op: "embedding",
                msg: format!("table {shape:?}, max id {:?}", ids.iter().max()),
            });
        }
        let d = shape[1];
        let (value, rg) = self.with_node(table.id, |n| {
            let mut out = Vec::with_capacity(ids.len() * d);
            for &i in ids {
                out.extend_from_slice(&n.value[i * d..(i + 1) * d]);
            }
            (out, n.requires_grad)
        });
        Ok(self.push(
            vec![ids.len(), d],
            value,
            Op::Embedding {
                table: table.id,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }
}
