use crate::error::{Error, Result};
use crate::tensor::{matmul_kernel, matmul_nt_acc, matmul_tn_acc, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    MeanRows(Var),
    StdRows(Var),
    SliceRows { src: Var, start: usize },
    SliceCols { src: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    SumSquares(Var),
    Nll { probs: Var, labels: Vec<usize>, floor: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    trainable: bool,
}

/// Ordered record of primitive applications for reverse-mode differentiation.
///
/// Values are computed eagerly as operations are recorded. A tape can be
/// differentiated once; a second [`Tape::backward`] call is an error.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

/// Gradients of a scalar with respect to every trainable leaf of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn wrt(&self, var: Var) -> Result<&Tensor> {
        self.get(var)
            .ok_or_else(|| Error::Backward(format!("no gradient recorded for leaf {}", var.0)))
    }
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

    /// Records a leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Records a leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
            trainable,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            trainable: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn matrix_dims(&self, op: &'static str, var: Var) -> Result<(usize, usize)> {
        match *self.shape(var) {
            [r, c] => Ok((r, c)),
            ref other => Err(Error::shape(op, other, &[0, 0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims("transpose", x)?;
        let out = transpose_raw(self.value(x).data(), r, c);
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(x), &[x]))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Tensor::from_parts(self.shape(a).to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a vector along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xs = self.value(x);
        let bs = self.value(bias);
        if bs.rank() != 1 || xs.rank() == 0 || xs.cols() != bs.numel() {
            return Err(Error::shape("add_bias", xs.shape(), bs.shape()));
        }
        let c = bs.numel();
        let b = bs.data();
        let data = xs
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % c])
            .collect();
        let value = Tensor::from_parts(xs.shape().to_vec(), data);
        Ok(self.push(value, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push(value, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(value, Op::Tanh(x), &[x])
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Var {
        let xs = self.value(x);
        let value = Tensor::from_parts(xs.shape().to_vec(), softmax_rows(xs.data(), xs.cols()));
        self.push(value, Op::Softmax(x), &[x])
    }

    /// Per-column mean of an `S×D` matrix.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (s, d) = self.matrix_dims("mean_rows", x)?;
        let mean = column_means(self.value(x).data(), s, d);
        Ok(self.push(Tensor::from_parts(vec![d], mean), Op::MeanRows(x), &[x]))
    }

    /// Per-column population standard deviation of an `S×D` matrix.
    pub fn std_rows(&mut self, x: Var) -> Result<Var> {
        let (s, d) = self.matrix_dims("std_rows", x)?;
        let data = self.value(x).data();
        let mean = column_means(data, s, d);
        let std = column_std(data, &mean, s, d);
        Ok(self.push(Tensor::from_parts(vec![d], std), Op::StdRows(x), &[x]))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims("slice_rows", x)?;
        if len == 0 || start + len > r {
            return Err(Error::shape("slice_rows", &[r, c], &[start, len]));
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(
            Tensor::from_parts(vec![len, c], data),
            Op::SliceRows { src: x, start },
            &[x],
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims("slice_cols", x)?;
        if len == 0 || start + len > c {
            return Err(Error::shape("slice_cols", &[r, c], &[start, len]));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![r, len], data),
            Op::SliceCols { src: x, start },
            &[x],
        ))
    }

    /// Stacks matrices (or vectors, as single rows) vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_rows of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.rank() > 2 || v.rank() == 0 || v.cols() != cols {
                return Err(Error::shape("concat_rows", self.shape(*first), v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], data),
            Op::ConcatRows(parts.to_vec()),
            parts,
        ))
    }

    /// Joins along the last axis. Vectors join into a vector.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat_cols of nothing".into()))?;
        let rank = self.value(*first).rank();
        let rows = self.value(*first).rows();
        for &p in parts {
            let v = self.value(p);
            if v.rank() != rank || !(rank == 1 || rank == 2) || v.rows() != rows {
                return Err(Error::shape("concat_cols", self.shape(*first), v.shape()));
            }
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        Ok(self.push(Tensor::from_parts(shape, data), Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().map(|v| v * v).sum();
        self.push(Tensor::scalar(total), Op::SumSquares(x), &[x])
    }

    /// Mean negative log-probability of the labelled classes; probabilities
    /// are floored at `floor` before the logarithm.
    pub fn nll(&mut self, probs: Var, labels: &[usize], floor: f64) -> Result<Var> {
        let p = self.value(probs);
        let (b, k) = (p.rows(), p.cols());
        if p.rank() == 0 || p.rank() > 2 || labels.len() != b {
            return Err(Error::shape("nll", p.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {k} classes"
            )));
        }
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -p.data()[i * k + l].max(floor).ln())
            .sum();
        Ok(self.push(
            Tensor::scalar(total / b as f64),
            Op::Nll {
                probs,
                labels: labels.to_vec(),
                floor,
            },
            &[probs],
        ))
    }

    /// Reverse pass from a scalar. Every trainable leaf receives a gradient
    /// (zeros when the loss does not depend on it).
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this tape; record a new tape".into(),
            ));
        }
        let root = &self.nodes[loss.0];
        if !root.value.is_scalar() {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {:?}",
                root.value.shape()
            )));
        }
        if !root.needs_grad {
            return Err(Error::Backward(
                "loss is detached from every trainable leaf".into(),
            ));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let out = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                node.trainable.then(|| {
                    let data = grads
                        .get_mut(i)
                        .and_then(Option::take)
                        .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                    Tensor::from_parts(node.value.shape().to_vec(), data)
                })
            })
            .collect();
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        let val = |v: Var| &nodes[v.0].value;
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).shape()[0], val(*a).shape()[1]);
                let n = val(*b).shape()[1];
                if wants(*a) {
                    matmul_nt_acc(g, val(*b).data(), m, n, k, slot(grads, *a, m * k));
                }
                if wants(*b) {
                    matmul_tn_acc(val(*a).data(), g, m, k, n, slot(grads, *b, k * n));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (val(*x).shape()[0], val(*x).shape()[1]);
                accumulate(grads, *x, transpose_raw(g, c, r));
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.iter().map(|v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let d = g.iter().zip(val(*b).data()).map(|(x, y)| x * y).collect();
                    accumulate(grads, *a, d);
                }
                if wants(*b) {
                    let d = g.iter().zip(val(*a).data()).map(|(x, y)| x * y).collect();
                    accumulate(grads, *b, d);
                }
            }
            Op::AddBias(x, b) => {
                if wants(*x) {
                    accumulate(grads, *x, g.to_vec());
                }
                if wants(*b) {
                    let c = val(*b).numel();
                    let mut db = vec![0.0; c];
                    for row in g.chunks_exact(c) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Scale(x, factor) => accumulate(grads, *x, g.iter().map(|v| v * factor).collect()),
            Op::Relu(x) => {
                let d = g
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let d = g
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let d = g
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect();
                accumulate(grads, *x, d);
            }
            Op::Softmax(x) => {
                let c = out.cols();
                let mut d = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks_exact(c).zip(out.data().chunks_exact(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    d.extend(gr.iter().zip(yr).map(|(gv, y)| y * (gv - dot)));
                }
                accumulate(grads, *x, d);
            }
            Op::MeanRows(x) => {
                let s = val(*x).shape()[0];
                let inv = 1.0 / s as f64;
                let d = (0..s).flat_map(|_| g.iter().map(|v| v * inv)).collect();
                accumulate(grads, *x, d);
            }
            Op::StdRows(x) => {
                let xs = val(*x);
                let (s, dcols) = (xs.shape()[0], xs.shape()[1]);
                let mean = column_means(xs.data(), s, dcols);
                let std = out.data();
                let mut d = vec![0.0; s * dcols];
                for i in 0..s {
                    for j in 0..dcols {
                        if std[j] > 0.0 {
                            d[i * dcols + j] =
                                g[j] * (xs.data()[i * dcols + j] - mean[j]) / (s as f64 * std[j]);
                        }
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::SliceRows { src, start } => {
                let c = val(*src).cols();
                let d = slot(grads, *src, val(*src).numel());
                add_into(&mut d[start * c..start * c + g.len()], g);
            }
            Op::SliceCols { src, start } => {
                let c = val(*src).cols();
                let len = out.cols();
                let d = slot(grads, *src, val(*src).numel());
                for (i, gr) in g.chunks_exact(len).enumerate() {
                    add_into(&mut d[i * c + start..i * c + start + len], gr);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).numel();
                    if wants(p) {
                        accumulate(grads, p, g[offset..offset + n].to_vec());
                    }
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut col = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if wants(p) {
                        let d = g
                            .chunks_exact(total)
                            .flat_map(|row| row[col..col + w].iter().copied())
                            .collect();
                        accumulate(grads, p, d);
                    }
                    col += w;
                }
            }
            Op::Reshape(x) => accumulate(grads, *x, g.to_vec()),
            Op::Sum(x) => accumulate(grads, *x, vec![g[0]; val(*x).numel()]),
            Op::SumSquares(x) => {
                accumulate(grads, *x, val(*x).data().iter().map(|v| 2.0 * g[0] * v).collect())
            }
            Op::Nll { probs, labels, floor } => {
                let p = val(*probs);
                let k = p.cols();
                let b = labels.len() as f64;
                let mut d = vec![0.0; p.numel()];
                for (i, &l) in labels.iter().enumerate() {
                    let pv = p.data()[i * k + l];
                    if pv > *floor {
                        d[i * k + l] = -g[0] / (b * pv);
                    }
                }
                accumulate(grads, *probs, d);
            }
        }
    }
}

/// The gradient buffer of `var`, created as zeros on first use.
fn slot(grads: &mut [Option<Vec<f64>>], var: Var, numel: usize) -> &mut [f64] {
    grads[var.0].get_or_insert_with(|| vec![0.0; numel])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, contribution: Vec<f64>) {
    match &mut grads[var.0] {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(&contribution) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn transpose_raw(data: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = data[i * c + j];
        }
    }
    out
}

pub(crate) fn softmax_rows(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks_exact(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        let total: f64 = out[start..].iter().sum();
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    out
}

fn column_means(data: &[f64], s: usize, d: usize) -> Vec<f64> {
    // Shifted by the first row so identical rows give their exact value.
    let mut mean = vec![0.0; d];
    let base = &data[..d];
    for row in data.chunks_exact(d) {
        for ((m, v), b) in mean.iter_mut().zip(row).zip(base) {
            *m += v - b;
        }
    }
    mean.iter().zip(base).map(|(m, b)| b + m / s as f64).collect()
}

fn column_std(data: &[f64], mean: &[f64], s: usize, d: usize) -> Vec<f64> {
    let mut var = vec![0.0; d];
    for row in data.chunks_exact(d) {
        for ((acc, v), m) in var.iter_mut().zip(row).zip(mean) {
            *acc += (v - m) * (v - m);
        }
    }
    var.iter().map(|v| (v / s as f64).sqrt()).collect()
}
