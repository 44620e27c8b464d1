use std::borrow::Cow;

use super::{matmul_acc, sigmoid, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    AddRow(usize, usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Sigmoid(usize),
    SoftmaxRows(usize),
    Sum(usize),
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    Scale(usize, f64),
    AddScalar(usize),
    Custom {
        input: usize,
        deriv: fn(f64) -> f64,
    },
    SoftmaxXent {
        logits: usize,
        targets: Vec<usize>,
        weights: Option<Vec<f64>>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
    slot: Option<usize>,
}

/// Define-by-run recording of primitive applications.
///
/// Nodes are appended in evaluation order, so every input index is smaller
/// than the index of its consumer and a single reverse sweep visits each
/// node once. Parameters can be borrowed into the tape without copying.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    spent: bool,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
    slots: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when `var` did not influence the loss.
    pub fn wrt(&self, var: Var) -> Tensor {
        let shape = &self.shapes[var.0];
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn wrt_slice(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }

    /// `(slot, gradient)` pairs for every parameter leaf on the tape.
    pub fn params(&self) -> impl Iterator<Item = (usize, Option<&[f64]>)> + '_ {
        self.slots
            .iter()
            .map(|&(slot, node)| (slot, self.grads[node].as_deref()))
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.spent = false;
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn node(&self, v: Var) -> Result<&Node<'a>, TensorError> {
        self.nodes.get(v.0).ok_or(TensorError::UnknownVar(v.0))
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
            slot: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(
        &mut self,
        value: Cow<'a, Tensor>,
        requires_grad: bool,
        slot: Option<usize>,
    ) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            slot,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf owned by the tape.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), true, None)
    }

    /// Non-trainable leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), false, None)
    }

    /// Trainable leaf borrowed from a parameter store, tagged with its slot.
    pub fn param(&mut self, value: &'a Tensor, slot: usize) -> Var {
        self.push_leaf(Cow::Borrowed(value), true, Some(slot))
    }

    /// Trainable owned leaf tagged with a parameter slot.
    pub fn param_owned(&mut self, value: Tensor, slot: usize) -> Var {
        self.push_leaf(Cow::Owned(value), true, Some(slot))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        let (r, k) = ta.dims2()?;
        let (k2, c) = tb.dims2()?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; r * c];
        matmul_acc(ta.data(), tb.data(), &mut out, r, k, c);
        let value = Tensor::matrix(r, c, out)?;
        Ok(self.push(value, Op::MatMul(a.0, b.0), &[a.0, b.0]))
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        if ta.dims2()? != tb.dims2()? {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a.0, b.0]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("div", a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    /// Adds a `1×c` row to every row of an `r×c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(row)?.value);
        let (r, c) = ta.dims2()?;
        if tb.dims2()? != (1, c) {
            return Err(shape_err("add_row", ta, tb));
        }
        let mut data = ta.data().to_vec();
        for i in 0..r {
            for (o, &b) in data[i * c..(i + 1) * c].iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let value = Tensor::matrix(r, c, data)?;
        Ok(self.push(value, Op::AddRow(a.0, row.0), &[a.0, row.0]))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or(TensorError::Empty { op: "concat_cols" })?;
        let rows = self.node(*first)?.value.dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = &self.node(p)?.value;
            let (r, c) = t.dims2()?;
            if r != rows {
                return Err(shape_err("concat_cols", &self.nodes[first.0].value, t));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].value.data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatCols(idx.clone()), &idx))
    }

    /// Vertical concatenation of matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or(TensorError::Empty { op: "concat_rows" })?;
        let cols = self.node(*first)?.value.dims2()?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = &self.node(p)?.value;
            let (r, c) = t.dims2()?;
            if c != cols {
                return Err(shape_err("concat_rows", &self.nodes[first.0].value, t));
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        let idx: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(value, Op::ConcatRows(idx.clone()), &idx))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let t = &self.node(a)?.value;
        let (r, c) = t.dims2()?;
        if start >= end || end > r {
            return Err(TensorError::OutOfRange {
                op: "slice_rows",
                index: end,
                bound: r,
            });
        }
        let value = Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec())?;
        Ok(self.push(value, Op::SliceRows(a.0, start), &[a.0]))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let t = &self.node(a)?.value;
        let (r, c) = t.dims2()?;
        if start >= end || end > c {
            return Err(TensorError::OutOfRange {
                op: "slice_cols",
                index: end,
                bound: c,
            });
        }
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&t.data()[i * c + start..i * c + end]);
        }
        let value = Tensor::matrix(r, end - start, data)?;
        Ok(self.push(value, Op::SliceCols(a.0, start), &[a.0]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = &self.node(a)?.value;
        let (r, c) = t.dims2()?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = t.data()[i * c + j];
            }
        }
        let value = Tensor::matrix(c, r, data)?;
        Ok(self.push(value, Op::Transpose(a.0), &[a.0]))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, TensorError> {
        let t = &self.node(a)?.value;
        let data = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a.0]))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.map(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, TensorError> {
        self.map(a, |x| x * factor, Op::Scale(a.0, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var, TensorError> {
        self.map(a, |x| x + offset, Op::AddScalar(a.0))
    }

    /// Elementwise map with a caller-supplied derivative.
    pub fn custom(
        &mut self,
        a: Var,
        forward: fn(f64) -> f64,
        deriv: fn(f64) -> f64,
    ) -> Result<Var, TensorError> {
        self.map(a, forward, Op::Custom { input: a.0, deriv })
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let t = &self.node(a)?.value;
        let (r, c) = t.dims2()?;
        if c == 0 {
            return Err(TensorError::Empty { op: "softmax_rows" });
        }
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(super::softmax_row(t.row_slice(i)));
        }
        let value = Tensor::matrix(r, c, data)?;
        Ok(self.push(value, Op::SoftmaxRows(a.0), &[a.0]))
    }

    /// Sum of all elements, as a `1×1` tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total = self.node(a)?.value.sum();
        Ok(self.push(Tensor::scalar(total), Op::Sum(a.0), &[a.0]))
    }

    /// Gathers rows of `table` (vocab × dim) for each id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let t = &self.node(table)?.value;
        let (v, m) = t.dims2()?;
        if ids.is_empty() {
            return Err(TensorError::Empty { op: "embedding" });
        }
        let mut data = Vec::with_capacity(ids.len() * m);
        for &id in ids {
            if id >= v {
                return Err(TensorError::OutOfRange {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(t.row_slice(id));
        }
        let value = Tensor::matrix(ids.len(), m, data)?;
        Ok(self.push(
            value,
            Op::Embedding {
                table: table.0,
                ids: ids.to_vec(),
            },
            &[table.0],
        ))
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. Rows with weight 0 contribute nothing.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        weights: Option<&[f64]>,
    ) -> Result<Var, TensorError> {
        let t = &self.node(logits)?.value;
        let (r, c) = t.dims2()?;
        if targets.len() != r || weights.is_some_and(|w| w.len() != r) {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: t.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let mut probs = Vec::with_capacity(r * c);
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            if y >= c {
                return Err(TensorError::OutOfRange {
                    op: "softmax_cross_entropy",
                    index: y,
                    bound: c,
                });
            }
            let lp = super::log_softmax_row(t.row_slice(i));
            let w = weights.map_or(1.0, |w| w[i]);
            if w != 0.0 {
                loss -= w * lp[y];
            }
            probs.extend(lp.iter().map(|v| v.exp()));
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits: logits.0,
                targets: targets.to_vec(),
                weights: weights.map(<[f64]>::to_vec),
                probs,
            },
            &[logits.0],
        ))
    }

    /// Reverse sweep from `loss`. May run once per recording.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, TensorError> {
        if self.spent {
            return Err(TensorError::BackwardTwice);
        }
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        self.spent = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }

        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        let slots = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.slot.map(|s| (s, i)))
            .collect();
        Ok(Gradients {
            grads,
            shapes,
            slots,
        })
    }

    fn wants(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.nodes[idx].value;
        let val = |i: usize| -> &Tensor { &self.nodes[i].value };
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (r, k) = ta.dims2().unwrap();
                let c = tb.cols();
                if self.wants(*a) {
                    let ga = acc(grads, *a, r * k);
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for p in 0..k {
                            let brow = &tb.data()[p * c..(p + 1) * c];
                            ga[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = acc(grads, *b, k * c);
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            for (o, &gv) in gb[p * c..(p + 1) * c].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for (i, sign) in [(*a, 1.0), (*b, 1.0)] {
                    if self.wants(i) {
                        let gi = acc(grads, i, g.len());
                        gi.iter_mut().zip(g).for_each(|(o, &v)| *o += sign * v);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(o, &v)| *o += v);
                }
                if self.wants(*b) {
                    let gb = acc(grads, *b, g.len());
                    gb.iter_mut().zip(g).for_each(|(o, &v)| *o -= v);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] * tb[k];
                    }
                }
                if self.wants(*b) {
                    let gb = acc(grads, *b, g.len());
                    for k in 0..g.len() {
                        gb[k] += g[k] * ta[k];
                    }
                }
            }
            Op::Div(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    for k in 0..g.len() {
                        ga[k] += g[k] / tb[k];
                    }
                }
                if self.wants(*b) {
                    let gb = acc(grads, *b, g.len());
                    for k in 0..g.len() {
                        gb[k] -= g[k] * ta[k] / (tb[k] * tb[k]);
                    }
                }
            }
            Op::AddRow(a, row) => {
                let (r, c) = out.dims2().unwrap();
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(o, &v)| *o += v);
                }
                if self.wants(*row) {
                    let gr = acc(grads, *row, c);
                    for i in 0..r {
                        for (o, &v) in gr.iter_mut().zip(&g[i * c..(i + 1) * c]) {
                            *o += v;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = out.dims2().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.wants(p) {
                        let gp = acc(grads, p, r * w);
                        for i in 0..r {
                            let src = &g[i * total + offset..i * total + offset + w];
                            for (o, &v) in gp[i * w..(i + 1) * w].iter_mut().zip(src) {
                                *o += v;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    if self.wants(p) {
                        let gp = acc(grads, p, len);
                        for (o, &v) in gp.iter_mut().zip(&g[offset..offset + len]) {
                            *o += v;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceRows(a, start) => {
                if self.wants(*a) {
                    let c = out.cols();
                    let len = val(*a).len();
                    let ga = acc(grads, *a, len);
                    for (o, &v) in ga[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *o += v;
                    }
                }
            }
            Op::SliceCols(a, start) => {
                if self.wants(*a) {
                    let (r, w) = out.dims2().unwrap();
                    let c = val(*a).cols();
                    let len = val(*a).len();
                    let ga = acc(grads, *a, len);
                    for i in 0..r {
                        for j in 0..w {
                            ga[i * c + start + j] += g[i * w + j];
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    let (r, c) = out.dims2().unwrap();
                    let ga = acc(grads, *a, g.len());
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    for (k, &y) in out.data().iter().enumerate() {
                        ga[k] += g[k] * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    for (k, &y) in out.data().iter().enumerate() {
                        ga[k] += g[k] * y * (1.0 - y);
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                if self.wants(*a) {
                    let (r, c) = out.dims2().unwrap();
                    let ga = acc(grads, *a, g.len());
                    for i in 0..r {
                        let y = &out.data()[i * c..(i + 1) * c];
                        let gy = &g[i * c..(i + 1) * c];
                        let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            ga[i * c + j] += y[j] * (gy[j] - dot);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if self.wants(*a) {
                    let len = val(*a).len();
                    let ga = acc(grads, *a, len);
                    ga.iter_mut().for_each(|o| *o += g[0]);
                }
            }
            Op::Embedding { table, ids } => {
                if self.wants(*table) {
                    let m = out.cols();
                    let len = val(*table).len();
                    let gt = acc(grads, *table, len);
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, &v) in gt[id * m..(id + 1) * m]
                            .iter_mut()
                            .zip(&g[i * m..(i + 1) * m])
                        {
                            *o += v;
                        }
                    }
                }
            }
            Op::Scale(a, factor) => {
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(o, &v)| *o += factor * v);
                }
            }
            Op::AddScalar(a) => {
                if self.wants(*a) {
                    let ga = acc(grads, *a, g.len());
                    ga.iter_mut().zip(g).for_each(|(o, &v)| *o += v);
                }
            }
            Op::Custom { input, deriv } => {
                if self.wants(*input) {
                    let x = val(*input).data();
                    let gi = acc(grads, *input, g.len());
                    for k in 0..g.len() {
                        gi[k] += g[k] * deriv(x[k]);
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                targets,
                weights,
                probs,
            } => {
                if self.wants(*logits) {
                    let c = val(*logits).cols();
                    let gl = acc(grads, *logits, probs.len());
                    for (i, &y) in targets.iter().enumerate() {
                        let w = weights.as_ref().map_or(1.0, |w| w[i]) * g[0];
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            gl[i * c + j] += w * (probs[i * c + j] - onehot);
                        }
                    }
                }
            }
        }
    }
}
