//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive application in creation order, so the
//! node list is always topologically sorted. [`Graph::backward`] walks it in
//! reverse and accumulates vector-Jacobian products into per-node buffers.

use super::{Real, Tensor};
use crate::cellspace::OpKind;
use crate::error::{Error, Result};

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T: Real> {
    Leaf,
    /// `y = x . w^T`; `x` is `[batch, in]` or `[in]`, `w` is `[out, in]`.
    Affine { x: NodeId, w: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias { x: NodeId, bias: NodeId },
    Scale(NodeId, T),
    Activation(OpKind, NodeId),
    SumN(Vec<NodeId>),
    ScaleByElement { x: NodeId, w: NodeId, index: usize },
    Softmax(NodeId),
    CrossEntropy { logits: NodeId, targets: Vec<usize>, probs: Vec<T> },
    Gather { table: NodeId, ids: Vec<usize> },
    ConcatRows(Vec<NodeId>),
    BatchNorm { x: NodeId, inv_std: Vec<T> },
    SumAll(NodeId),
}

#[derive(Clone, Debug)]
struct Node<T: Real> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
    is_param: bool,
}

/// Append-only computation tape.
#[derive(Clone, Debug, Default)]
pub struct Graph<T: Real = f64> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by one backward pass, indexed by [`NodeId`].
#[derive(Clone, Debug)]
pub struct Gradients<T: Real = f64> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Moves a gradient out, leaving `None` behind.
    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

pub(crate) fn activate<T: Real>(kind: OpKind, v: T) -> T {
    match kind {
        OpKind::Tanh => v.tanh(),
        OpKind::Relu => v.max(T::zero()),
        OpKind::Sigmoid => T::one() / (T::one() + (-v).exp()),
        OpKind::Identity => v,
    }
}

/// Derivative expressed through the activation's output `y`.
fn activation_slope<T: Real>(kind: OpKind, y: T) -> T {
    match kind {
        OpKind::Tanh => T::one() - y * y,
        OpKind::Relu => {
            if y > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
        OpKind::Sigmoid => y * (T::one() - y),
        OpKind::Identity => T::one(),
    }
}

fn accumulate<'a, T: Real>(
    grads: &'a mut [Option<Vec<T>>],
    id: NodeId,
    len: usize,
) -> &'a mut [T] {
    grads[id.0].get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            is_param: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    /// Learnable leaf; always receives a gradient from `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        let id = self.push(Op::Leaf, value, true);
        self.nodes[id.0].is_param = true;
        id
    }

    /// Leaf that is never differentiated.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn params(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_param)
            .map(|(i, _)| NodeId(i))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Dimension {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    /// Applies `w` to `x`: `W x` for a vector, `X W^T` row-wise for a batch.
    pub fn affine(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (ws, xs) = (self.shape(w).to_vec(), self.shape(x).to_vec());
        if ws.len() != 2 || xs.is_empty() || xs.len() > 2 || ws[1] != *xs.last().unwrap() {
            return Err(Error::Dimension {
                op: "affine",
                left: ws,
                right: xs,
            });
        }
        let (out, inner) = (ws[0], ws[1]);
        let batch = if xs.len() == 2 { xs[0] } else { 1 };
        let mut y = vec![T::zero(); batch * out];
        T::gemm(
            batch,
            inner,
            out,
            T::one(),
            (self.value(x).data(), inner as isize, 1),
            (self.value(w).data(), 1, inner as isize),
            T::zero(),
            (&mut y, out as isize, 1),
        );
        let shape = if xs.len() == 2 { vec![batch, out] } else { vec![out] };
        let rg = self.needs(&[w, x]);
        Ok(self.push(Op::Affine { x, w }, Tensor::new(shape, y)?, rg))
    }

    fn zip(&mut self, op: Op<T>, a: NodeId, b: NodeId, f: impl Fn(T, T) -> T) -> NodeId {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data).expect("shape checked");
        let rg = self.needs(&[a, b]);
        self.push(op, value, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    /// Adds a `[cols]` bias to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let vx = self.value(x);
        let vb = self.value(bias);
        if vb.shape().len() != 1 || vb.len() != vx.cols() {
            return Err(Error::Dimension {
                op: "add_bias",
                left: vx.shape().to_vec(),
                right: vb.shape().to_vec(),
            });
        }
        let cols = vx.cols();
        let mut data = vx.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (v, &b) in row.iter_mut().zip(vb.data()) {
                *v += b;
            }
        }
        let value = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.needs(&[x, bias]);
        Ok(self.push(Op::AddBias { x, bias }, value, rg))
    }

    pub fn scale(&mut self, x: NodeId, c: T) -> NodeId {
        let value = self.value(x).map(|v| v * c);
        let rg = self.needs(&[x]);
        self.push(Op::Scale(x, c), value, rg)
    }

    pub fn activation(&mut self, kind: OpKind, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| activate(kind, v));
        let rg = self.needs(&[x]);
        self.push(Op::Activation(kind, x), value, rg)
    }

    /// Elementwise sum of equally shaped nodes, accumulated in list order.
    pub fn sum_n(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("sum_n of zero operands".into()))?;
        for &x in &xs[1..] {
            self.same_shape("sum_n", first, x)?;
        }
        let mut data = self.value(first).data().to_vec();
        for &x in &xs[1..] {
            for (acc, &v) in data.iter_mut().zip(self.value(x).data()) {
                *acc += v;
            }
        }
        let value = Tensor::new(self.shape(first).to_vec(), data)?;
        let rg = self.needs(xs);
        Ok(self.push(Op::SumN(xs.to_vec()), value, rg))
    }

    /// `x * w[index]` where `w` is a vector node.
    pub fn scale_by_element(&mut self, x: NodeId, w: NodeId, index: usize) -> Result<NodeId> {
        let wv = self.value(w);
        if index >= wv.len() {
            return Err(Error::Index {
                what: "weight element",
                index,
                limit: wv.len(),
            });
        }
        let c = wv.data()[index];
        let value = self.value(x).map(|v| v * c);
        let rg = self.needs(&[x, w]);
        Ok(self.push(Op::ScaleByElement { x, w, index }, value, rg))
    }

    /// Max-shifted softmax of a vector.
    pub fn softmax(&mut self, v: NodeId) -> Result<NodeId> {
        let x = self.value(v);
        if x.shape().len() != 1 {
            return Err(Error::Dimension {
                op: "softmax",
                left: x.shape().to_vec(),
                right: vec![],
            });
        }
        let value = Tensor::from_vec(softmax(x.data())?);
        let rg = self.needs(&[v]);
        Ok(self.push(Op::Softmax(v), value, rg))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits` (`[n, vocab]`), in nats.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        let (rows, vocab) = (lv.rows(), lv.cols());
        if lv.shape().len() != 2 || targets.len() != rows {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: lv.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Index {
                what: "target",
                index: bad,
                limit: vocab,
            });
        }
        let mut probs = Vec::with_capacity(rows * vocab);
        let mut total = 0.0f64;
        for (r, &t) in targets.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for &v in row {
                denom += (v - max).exp();
            }
            let log_denom = denom.ln() + max;
            total += (log_denom - row[t]).as_f64();
            probs.extend(row.iter().map(|&v| (v - log_denom).exp()));
        }
        let loss = T::from_f64(total / rows as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            Tensor::scalar(loss),
            rg,
        ))
    }

    /// Row lookup: `[ids.len(), cols]` from a `[rows, cols]` table.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(Error::Dimension {
                op: "gather",
                left: tv.shape().to_vec(),
                right: vec![ids.len()],
            });
        }
        let (rows, cols) = (tv.rows(), tv.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "token",
                    index: id,
                    limit: rows,
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let value = Tensor::new(vec![ids.len(), cols], data)?;
        let rg = self.needs(&[table]);
        Ok(self.push(
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            value,
            rg,
        ))
    }

    /// Stacks `[r_i, cols]` matrices vertically.
    pub fn concat_rows(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero operands".into()))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &x in xs {
            let v = self.value(x);
            if v.shape().len() != 2 || v.cols() != cols {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    left: self.shape(first).to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::new(vec![rows, cols], data)?;
        let rg = self.needs(xs);
        Ok(self.push(Op::ConcatRows(xs.to_vec()), value, rg))
    }

    /// Per-feature standardization over the batch axis (no scale or shift).
    /// Returns `x` itself when disabled.
    pub fn batch_norm(&mut self, x: NodeId, enabled: bool, eps: f64) -> Result<NodeId> {
        if !enabled {
            return Ok(x);
        }
        let xv = self.value(x);
        let (n, d) = (xv.rows(), xv.cols());
        if xv.shape().len() != 2 || n < 2 {
            return Err(Error::config(format!(
                "batch normalization needs a batch of at least 2 rows, got shape {:?}",
                xv.shape()
            )));
        }
        let nf = T::from_f64(n as f64);
        let eps = T::from_f64(eps);
        let src = xv.data();
        let mut mean = vec![T::zero(); d];
        for row in src.chunks(d) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / nf);
        let mut var = vec![T::zero(); d];
        for row in src.chunks(d) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<T> = var
            .iter()
            .map(|&s| T::one() / (s / nf + eps).sqrt())
            .collect();
        let mut out = src.to_vec();
        for row in out.chunks_mut(d) {
            for ((v, &m), &is) in row.iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * is;
            }
        }
        let value = Tensor::new(vec![n, d], out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::BatchNorm { x, inv_std }, value, rg))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(Op::SumAll(x), value, rg)
    }

    /// Differentiates a scalar `loss` with respect to every node.
    ///
    /// Every parameter receives a gradient; parameters not connected to
    /// `loss` get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_from(&[(loss, Tensor::ones(self.shape(loss)))])
    }

    /// Backward pass seeded with explicit output gradients.
    pub fn backward_from(&self, seeds: &[(NodeId, Tensor<T>)]) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        let mut last = 0;
        for (id, g) in seeds {
            if g.shape() != self.shape(*id) {
                return Err(Error::Dimension {
                    op: "backward seed",
                    left: self.shape(*id).to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            let buf = accumulate(&mut grads, *id, g.len());
            for (a, &v) in buf.iter_mut().zip(g.data()) {
                *a += v;
            }
            last = last.max(id.0);
        }

        for i in (0..=last).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop_node(node, &gy, &mut grads);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match g {
                Some(data) => Some(Tensor::new(node.value.shape().to_vec(), data).expect("grad shape")),
                None if node.is_param => Some(Tensor::zeros(node.value.shape())),
                None => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn backprop_node(&self, node: &Node<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w } => {
                let (out, inner) = (self.shape(*w)[0], self.shape(*w)[1]);
                let batch = self.value(*x).rows();
                if self.rg(*x) {
                    let wd = self.value(*w).data();
                    let dx = accumulate(grads, *x, batch * inner);
                    T::gemm(
                        batch,
                        out,
                        inner,
                        T::one(),
                        (gy, out as isize, 1),
                        (wd, inner as isize, 1),
                        T::one(),
                        (dx, inner as isize, 1),
                    );
                }
                if self.rg(*w) {
                    let xd = self.value(*x).data();
                    let dw = accumulate(grads, *w, out * inner);
                    T::gemm(
                        out,
                        batch,
                        inner,
                        T::one(),
                        (gy, 1, out as isize),
                        (xd, inner as isize, 1),
                        T::one(),
                        (dw, inner as isize, 1),
                    );
                }
            }
            Op::Add(a, b) => {
                for id in [a, b] {
                    if self.rg(*id) {
                        let d = accumulate(grads, *id, gy.len());
                        d.iter_mut().zip(gy).for_each(|(d, &g)| *d += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    let d = accumulate(grads, *a, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, &g)| *d += g);
                }
                if self.rg(*b) {
                    let d = accumulate(grads, *b, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, &g)| *d -= g);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let bv = self.value(*b).data();
                    let d = accumulate(grads, *a, gy.len());
                    for ((d, &g), &o) in d.iter_mut().zip(gy).zip(bv) {
                        *d += g * o;
                    }
                }
                if self.rg(*b) {
                    let av = self.value(*a).data();
                    let d = accumulate(grads, *b, gy.len());
                    for ((d, &g), &o) in d.iter_mut().zip(gy).zip(av) {
                        *d += g * o;
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if self.rg(*x) {
                    let d = accumulate(grads, *x, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, &g)| *d += g);
                }
                if self.rg(*bias) {
                    let cols = self.value(*bias).len();
                    let d = accumulate(grads, *bias, cols);
                    for row in gy.chunks(cols) {
                        d.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
                    }
                }
            }
            Op::Scale(x, c) => {
                if self.rg(*x) {
                    let d = accumulate(grads, *x, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, &g)| *d += g * *c);
                }
            }
            Op::Activation(kind, x) => {
                if self.rg(*x) {
                    let d = accumulate(grads, *x, gy.len());
                    for ((d, &g), &o) in d.iter_mut().zip(gy).zip(y) {
                        *d += g * activation_slope(*kind, o);
                    }
                }
            }
            Op::SumN(xs) => {
                for id in xs {
                    if self.rg(*id) {
                        let d = accumulate(grads, *id, gy.len());
                        d.iter_mut().zip(gy).for_each(|(d, &g)| *d += g);
                    }
                }
            }
            Op::ScaleByElement { x, w, index } => {
                let c = self.value(*w).data()[*index];
                if self.rg(*x) {
                    let d = accumulate(grads, *x, gy.len());
                    d.iter_mut().zip(gy).for_each(|(d, &g)| *d += g * c);
                }
                if self.rg(*w) {
                    let xv = self.value(*x).data();
                    let dot: T = gy.iter().zip(xv).map(|(&g, &v)| g * v).sum();
                    let n = self.value(*w).len();
                    accumulate(grads, *w, n)[*index] += dot;
                }
            }
            Op::Softmax(x) => {
                if self.rg(*x) {
                    let dot: T = gy.iter().zip(y).map(|(&g, &p)| g * p).sum();
                    let d = accumulate(grads, *x, gy.len());
                    for ((d, &g), &p) in d.iter_mut().zip(gy).zip(y) {
                        *d += p * (g - dot);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if self.rg(*logits) {
                    let vocab = self.value(*logits).cols();
                    let scale = gy[0] / T::from_f64(targets.len() as f64);
                    let d = accumulate(grads, *logits, probs.len());
                    for (r, &t) in targets.iter().enumerate() {
                        let drow = &mut d[r * vocab..(r + 1) * vocab];
                        let prow = &probs[r * vocab..(r + 1) * vocab];
                        for (dv, &p) in drow.iter_mut().zip(prow) {
                            *dv += scale * p;
                        }
                        drow[t] -= scale;
                    }
                }
            }
            Op::Gather { table, ids } => {
                if self.rg(*table) {
                    let cols = self.value(*table).cols();
                    let n = self.value(*table).len();
                    let d = accumulate(grads, *table, n);
                    for (&id, g) in ids.iter().zip(gy.chunks(cols)) {
                        d[id * cols..(id + 1) * cols]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(d, &g)| *d += g);
                    }
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for id in xs {
                    let len = self.value(*id).len();
                    if self.rg(*id) {
                        let d = accumulate(grads, *id, len);
                        d.iter_mut()
                            .zip(&gy[offset..offset + len])
                            .for_each(|(d, &g)| *d += g);
                    }
                    offset += len;
                }
            }
            Op::BatchNorm { x, inv_std } => {
                if self.rg(*x) {
                    let d = inv_std.len();
                    let n = gy.len() / d;
                    let nf = T::from_f64(n as f64);
                    let mut sum_g = vec![T::zero(); d];
                    let mut sum_gy = vec![T::zero(); d];
                    for (grow, yrow) in gy.chunks(d).zip(y.chunks(d)) {
                        for j in 0..d {
                            sum_g[j] += grow[j];
                            sum_gy[j] += grow[j] * yrow[j];
                        }
                    }
                    let dx = accumulate(grads, *x, gy.len());
                    for ((drow, grow), yrow) in dx.chunks_mut(d).zip(gy.chunks(d)).zip(y.chunks(d)) {
                        for j in 0..d {
                            drow[j] += inv_std[j] / nf
                                * (nf * grow[j] - sum_g[j] - yrow[j] * sum_gy[j]);
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                if self.rg(*x) {
                    let n = self.value(*x).len();
                    let d = accumulate(grads, *x, n);
                    d.iter_mut().for_each(|d| *d += gy[0]);
                }
            }
        }
    }
}

/// Max-shifted softmax of a slice.
pub fn softmax<T: Real>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::Contract("softmax of an empty vector".into()));
    }
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}
