//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation appends a node to a [`Tape`] and returns a [`Var`] handle.
//! Nodes are stored in creation order, so the node list is already a
//! topological order and [`Tape::backward`] replays it in reverse, visiting
//! each node once. A tape supports exactly one backward pass.

use super::tensor::{split_axis, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    LogSoftmax(Var, usize),
    Sum(Var),
    IndexSelect(Var, Vec<usize>),
    Concat(Vec<Var>, usize),
    Reshape(Var),
    /// Scalar output whose gradient with respect to `input` was computed
    /// during the forward pass.
    ScalarWithGrad { input: Var, local_grad: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of a leaf after [`Tape::backward`]; zeros for leaves the
    /// loss does not depend on, `None` before backward or for non-leaves.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(value, op, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let src = self.value(a);
        let (outer, extent, inner) = split_axis(src.shape(), axis)?;
        let x = src.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * extent * inner + i;
                let mut max = f64::NEG_INFINITY;
                for k in 0..extent {
                    max = max.max(x[base + k * inner]);
                }
                let mut sum = 0.0;
                for k in 0..extent {
                    sum += (x[base + k * inner] - max).exp();
                }
                let lse = max + sum.ln();
                for k in 0..extent {
                    out[base + k * inner] = x[base + k * inner] - lse;
                }
            }
        }
        let value = Tensor::new(src.shape().to_vec(), out)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::LogSoftmax(a, axis), rg))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Gathers slabs along axis 0; indices may repeat.
    pub fn index_select(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let src = self.value(a);
        if src.rank() == 0 || indices.is_empty() {
            return Err(Error::InvalidArgument(
                "index_select needs rank >= 1 and at least one index".into(),
            ));
        }
        let rows = src.shape()[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for axis of extent {rows}"
            )));
        }
        let stride = src.numel() / rows;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&src.data()[i * stride..(i + 1) * stride]);
        }
        let mut shape = src.shape().to_vec();
        shape[0] = indices.len();
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::IndexSelect(a, indices.to_vec()), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let base_shape = self.shape(first).to_vec();
        let (outer, _, inner) = split_axis(&base_shape, axis)?;
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base_shape.len()
                && s.iter()
                    .zip(&base_shape)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: base_shape.clone(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let ext = self.shape(p)[axis];
                let chunk = ext * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base_shape;
        shape[axis] = total;
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(parts);
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape.to_vec())?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Records a scalar computed outside the tape from `input`, together with
    /// its gradient with respect to `input`.
    pub fn scalar_with_grad(&mut self, input: Var, value: f64, local_grad: Vec<f64>) -> Result<Var> {
        if local_grad.len() != self.value(input).numel() {
            return Err(Error::ShapeMismatch {
                op: "scalar_with_grad",
                left: self.shape(input).to_vec(),
                right: vec![local_grad.len()],
            });
        }
        let rg = self.needs(&[input]);
        Ok(self.push(
            Tensor::scalar(value),
            Op::ScalarWithGrad { input, local_grad },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, storing gradients on every leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.consumed = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
                f(slot);
            };
            match &node.op {
                Op::Leaf | Op::Constant => {}
                Op::MatMul(a, b) => {
                    let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
                    let (m, k, nn) = (sa[0], sa[1], sb[1]);
                    let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    // dA = G B^T, dB = A^T G
                    acc(*a, &|da| {
                        for r in 0..m {
                            for c in 0..k {
                                let mut s = 0.0;
                                for j in 0..nn {
                                    s += g[r * nn + j] * bv[c * nn + j];
                                }
                                da[r * k + c] += s;
                            }
                        }
                    });
                    acc(*b, &|db| {
                        for r in 0..m {
                            for c in 0..k {
                                let x = av[r * k + c];
                                if x == 0.0 {
                                    continue;
                                }
                                for j in 0..nn {
                                    db[c * nn + j] += x * g[r * nn + j];
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &|d| add_into(d, &g));
                    acc(*b, &|d| add_into(d, &g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &|d| add_into(d, &g));
                    acc(*b, &|d| d.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    acc(*a, &|d| {
                        for j in 0..d.len() {
                            d[j] += g[j] * bv[j];
                        }
                    });
                    acc(*b, &|d| {
                        for j in 0..d.len() {
                            d[j] += g[j] * av[j];
                        }
                    });
                }
                Op::Scale(a, c) => acc(*a, &|d| d.iter_mut().zip(&g).for_each(|(x, y)| *x += c * y)),
                Op::Tanh(a) => {
                    let y = node.value.data();
                    acc(*a, &|d| {
                        for j in 0..d.len() {
                            d[j] += g[j] * (1.0 - y[j] * y[j]);
                        }
                    });
                }
                Op::Relu(a) => {
                    let x = nodes[a.0].value.data();
                    acc(*a, &|d| {
                        for j in 0..d.len() {
                            if x[j] > 0.0 {
                                d[j] += g[j];
                            }
                        }
                    });
                }
                Op::LogSoftmax(a, axis) => {
                    let y = node.value.data();
                    let (outer, extent, inner) =
                        split_axis(node.value.shape(), *axis).expect("validated in forward");
                    acc(*a, &|d| {
                        for o in 0..outer {
                            for i in 0..inner {
                                let base = o * extent * inner + i;
                                let gsum: f64 = (0..extent).map(|k| g[base + k * inner]).sum();
                                for k in 0..extent {
                                    let idx = base + k * inner;
                                    d[idx] += g[idx] - y[idx].exp() * gsum;
                                }
                            }
                        }
                    });
                }
                Op::Sum(a) => acc(*a, &|d| d.iter_mut().for_each(|x| *x += g[0])),
                Op::IndexSelect(a, indices) => {
                    let stride = g.len() / indices.len();
                    acc(*a, &|d| {
                        for (r, &src) in indices.iter().enumerate() {
                            add_into(
                                &mut d[src * stride..(src + 1) * stride],
                                &g[r * stride..(r + 1) * stride],
                            );
                        }
                    });
                }
                Op::Concat(parts, axis) => {
                    let shape = node.value.shape();
                    let (outer, total, inner) = split_axis(shape, *axis).expect("validated");
                    let mut offset = 0;
                    for p in parts {
                        let ext = nodes[p.0].value.shape()[*axis];
                        acc(*p, &|d| {
                            for o in 0..outer {
                                let src = o * total * inner + offset * inner;
                                add_into(
                                    &mut d[o * ext * inner..(o + 1) * ext * inner],
                                    &g[src..src + ext * inner],
                                );
                            }
                        });
                        offset += ext;
                    }
                }
                Op::Reshape(a) => acc(*a, &|d| add_into(d, &g)),
                Op::ScalarWithGrad { input, local_grad } => acc(*input, &|d| {
                    for j in 0..d.len() {
                        d[j] += g[0] * local_grad[j];
                    }
                }),
            }
        }

        for (i, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                let g = g.unwrap_or_else(|| vec![0.0; node.value.numel()]);
                node.value.set_grad(g)?;
            }
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Plain `[m,k] x [k,n]` row-major product.
pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                row[j] += x * brow[j];
            }
        }
    }
    out
}
