//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! walks the tape in reverse, propagating vector-Jacobian products, and adds
//! the resulting gradients into the persistent buffers of the leaves that
//! require them. A tape is built for one forward pass and then dropped.

use super::dropout::DropoutMask;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Square(Var),
    Mask(Var, Vec<f64>),
    ConcatCols(Var, Var),
    RowSoftmax(Var),
    LogSoftmaxRows(Var),
    L2NormalizeRows(Var, Vec<f64>),
    PickPerRow(Var, Vec<usize>),
    LogFloor(Var, f64),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    needs_grad: bool,
    /// Accumulated gradient, kept only for leaves that require it.
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn matrix_dims(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [m, n] => Some((*m, *n)),
        _ => None,
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).needs_grad)
    }

    /// Records a tensor as a graph input. Tensors that require grad become
    /// differentiable leaves; the rest are constants.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let needs = t.requires_grad();
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, needs);
        if needs {
            self.nodes[v.0].grad = Some(vec![0.0; t.len()]);
        }
        v
    }

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Copies a node's value out as a free-standing tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Accumulated gradient of a differentiable leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    /// Adds the leaf gradient of `v` into `t`'s gradient buffer.
    pub fn accumulate_grad(&self, v: Var, t: &mut Tensor) -> Result<()> {
        let g = self
            .grad(v)
            .ok_or_else(|| Error::Contract("node is not a differentiable leaf".into()))?;
        if t.shape() != self.shape(v) {
            return Err(Error::dim("accumulate_grad", t.shape(), self.shape(v)));
        }
        let dst = t
            .grad_mut()
            .ok_or_else(|| Error::Contract("target tensor does not require grad".into()))?;
        dst.iter_mut().zip(g).for_each(|(d, s)| *d += s);
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, n) = match (matrix_dims(sa), matrix_dims(sb)) {
            (Some((m, k)), Some((k2, n))) if k == k2 => (m, k, n),
            _ => return Err(Error::dim("matmul", sa, sb)),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                orow.iter_mut().zip(brow).for_each(|(o, b)| *o += x * b);
            }
        }
        let needs = self.needs(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let sa = self.shape(a);
        let (m, n) = matrix_dims(sa).ok_or_else(|| Error::dim("transpose", sa, &[]))?;
        let av = self.value(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        let needs = self.needs(&[a]);
        Ok(self.push(vec![n, m], out, Op::Transpose(a), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("add", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(&[a, b]);
        Ok(self.push(shape, out, Op::Add(a, b), needs))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x);
        let n_bias = self.node(bias).value.len();
        let (m, n) = match matrix_dims(sx) {
            Some((m, n)) if n == n_bias => (m, n),
            _ => return Err(Error::dim("add_bias", sx, self.shape(bias))),
        };
        let (xv, bv) = (self.value(x), self.value(bias));
        let mut out = xv.to_vec();
        for i in 0..m {
            out[i * n..(i + 1) * n]
                .iter_mut()
                .zip(bv)
                .for_each(|(o, b)| *o += b);
        }
        let needs = self.needs(&[x, bias]);
        Ok(self.push(vec![m, n], out, Op::AddBias(x, bias), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("mul", self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(&[a, b]);
        Ok(self.push(shape, out, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * c).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(&[a]);
        self.push(shape, out, Op::Scale(a, c), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(&[a]);
        self.push(shape, out, Op::Tanh(a), needs)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x * x).collect();
        let shape = self.shape(a).to_vec();
        let needs = self.needs(&[a]);
        self.push(shape, out, Op::Square(a), needs)
    }

    /// Multiplies by a dropout mask; the gradient is routed through the same mask.
    pub fn apply_dropout(&mut self, x: Var, mask: &DropoutMask) -> Result<Var> {
        if self.shape(x) != mask.shape() {
            return Err(Error::dim("apply_dropout", self.shape(x), mask.shape()));
        }
        let out = self
            .value(x)
            .iter()
            .zip(mask.values())
            .map(|(v, m)| v * m)
            .collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(&[x]);
        Ok(self.push(shape, out, Op::Mask(x, mask.values().to_vec()), needs))
    }

    /// Row-wise concatenation `[a | b]` of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, na, nb) = match (matrix_dims(sa), matrix_dims(sb)) {
            (Some((m, na)), Some((m2, nb))) if m == m2 => (m, na, nb),
            _ => return Err(Error::dim("concat_cols", sa, sb)),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(m * (na + nb));
        for i in 0..m {
            out.extend_from_slice(&av[i * na..(i + 1) * na]);
            out.extend_from_slice(&bv[i * nb..(i + 1) * nb]);
        }
        let needs = self.needs(&[a, b]);
        Ok(self.push(vec![m, na + nb], out, Op::ConcatCols(a, b), needs))
    }

    /// Softmax over each row, max-shifted for stability.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        let (m, n) = matrix_dims(sx).ok_or_else(|| Error::dim("row_softmax", sx, &[]))?;
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(vec![m, n], out, Op::RowSoftmax(x), needs))
    }

    /// Log-softmax over each row via log-sum-exp.
    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x);
        let (m, n) = matrix_dims(sx).ok_or_else(|| Error::dim("log_softmax_rows", sx, &[]))?;
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(n) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(vec![m, n], out, Op::LogSoftmaxRows(x), needs))
    }

    /// Scales each row to unit Euclidean norm. Rows with norm below `eps`
    /// are rejected.
    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
        }
        let sx = self.shape(x);
        let (m, n) = matrix_dims(sx).ok_or_else(|| Error::dim("l2_normalize_rows", sx, &[]))?;
        let mut out = self.value(x).to_vec();
        let mut norms = Vec::with_capacity(m);
        for (i, row) in out.chunks_mut(n).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < eps {
                return Err(Error::DegenerateRow { row: i, norm });
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let needs = self.needs(&[x]);
        Ok(self.push(vec![m, n], out, Op::L2NormalizeRows(x, norms), needs))
    }

    /// Cosine similarity between every row of `u` and every row of `v`.
    pub fn cosine_similarity_matrix(&mut self, u: Var, v: Var) -> Result<Var> {
        if self.shape(u).get(1) != self.shape(v).get(1) {
            return Err(Error::dim(
                "cosine_similarity_matrix",
                self.shape(u),
                self.shape(v),
            ));
        }
        let un = self.l2_normalize_rows(u, super::NORM_EPS)?;
        let vn = self.l2_normalize_rows(v, super::NORM_EPS)?;
        let vt = self.transpose(vn)?;
        self.matmul(un, vt)
    }

    /// Picks entry `(i, indices[i])` from each row, giving a length-`m` vector.
    pub fn pick_per_row(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let sx = self.shape(x);
        let (m, n) = matrix_dims(sx).ok_or_else(|| Error::dim("pick_per_row", sx, &[]))?;
        if indices.len() != m {
            return Err(Error::dim("pick_per_row", sx, &[indices.len()]));
        }
        if let Some(&bad) = indices.iter().find(|&&j| j >= n) {
            return Err(Error::Contract(format!(
                "column index {bad} out of range for {n} columns"
            )));
        }
        let xv = self.value(x);
        let out = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| xv[i * n + j])
            .collect();
        let needs = self.needs(&[x]);
        Ok(self.push(vec![m], out, Op::PickPerRow(x, indices.to_vec()), needs))
    }

    /// `ln(max(x, floor))`, elementwise.
    pub fn log_floor(&mut self, x: Var, floor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v.max(floor).ln()).collect();
        let shape = self.shape(x).to_vec();
        let needs = self.needs(&[x]);
        self.push(shape, out, Op::LogFloor(x, floor), needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let needs = self.needs(&[x]);
        self.push(vec![1], vec![s], Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        let needs = self.needs(&[x]);
        self.push(vec![1], vec![s], Op::Mean(x), needs)
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients accumulate across
    /// calls until the tape is dropped.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                if let Some(acc) = self.nodes[idx].grad.as_mut() {
                    acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d);
                }
                continue;
            }
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Leaf => unreachable!("leaves handled above"),
                Op::MatMul(a, b) => {
                    let (m, k) = matrix_dims(self.shape(*a)).unwrap();
                    let n = self.shape(*b)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.node(*a).needs_grad {
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bv[p * n..(p + 1) * n];
                                ga[i * k + p] =
                                    grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                        add_into(&mut grads, *a, ga);
                    }
                    if self.node(*b).needs_grad {
                        let mut gb = vec![0.0; k * n];
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let x = av[i * k + p];
                                gb[p * n..(p + 1) * n]
                                    .iter_mut()
                                    .zip(grow)
                                    .for_each(|(o, gv)| *o += x * gv);
                            }
                        }
                        add_into(&mut grads, *b, gb);
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = matrix_dims(self.shape(*a)).unwrap();
                    let mut ga = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            ga[i * n + j] = g[j * m + i];
                        }
                    }
                    add_into(&mut grads, *a, ga);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.node(a).needs_grad {
                        add_into(&mut grads, a, g.clone());
                    }
                    if self.node(b).needs_grad {
                        add_into(&mut grads, b, g);
                    }
                }
                Op::AddBias(x, bias) => {
                    let (x, bias) = (*x, *bias);
                    let n = self.node(bias).value.len();
                    if self.node(bias).needs_grad {
                        let mut gb = vec![0.0; n];
                        for row in g.chunks(n) {
                            gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                        }
                        add_into(&mut grads, bias, gb);
                    }
                    if self.node(x).needs_grad {
                        add_into(&mut grads, x, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.node(a).needs_grad {
                        let ga = g.iter().zip(self.value(b)).map(|(d, y)| d * y).collect();
                        add_into(&mut grads, a, ga);
                    }
                    if self.node(b).needs_grad {
                        let gb = g.iter().zip(self.value(a)).map(|(d, x)| d * x).collect();
                        add_into(&mut grads, b, gb);
                    }
                }
                Op::Scale(a, c) => {
                    let ga = g.iter().map(|d| d * c).collect();
                    add_into(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.iter().zip(out).map(|(d, y)| d * (1.0 - y * y)).collect();
                    add_into(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g
                        .iter()
                        .zip(self.value(*a))
                        .map(|(d, x)| 2.0 * d * x)
                        .collect();
                    add_into(&mut grads, *a, ga);
                }
                Op::Mask(a, mask) => {
                    let ga = g.iter().zip(mask).map(|(d, m)| d * m).collect();
                    add_into(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, na) = matrix_dims(self.shape(a)).unwrap();
                    let nb = self.shape(b)[1];
                    let w = na + nb;
                    if self.node(a).needs_grad {
                        let mut ga = Vec::with_capacity(m * na);
                        for i in 0..m {
                            ga.extend_from_slice(&g[i * w..i * w + na]);
                        }
                        add_into(&mut grads, a, ga);
                    }
                    if self.node(b).needs_grad {
                        let mut gb = Vec::with_capacity(m * nb);
                        for i in 0..m {
                            gb.extend_from_slice(&g[i * w + na..(i + 1) * w]);
                        }
                        add_into(&mut grads, b, gb);
                    }
                }
                Op::RowSoftmax(a) => {
                    let n = self.shape(*a)[1];
                    let mut ga = vec![0.0; g.len()];
                    for ((grow, yrow), orow) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(d, y)| d * y).sum();
                        for ((o, d), y) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o = y * (d - dot);
                        }
                    }
                    add_into(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let n = self.shape(*a)[1];
                    let mut ga = vec![0.0; g.len()];
                    for ((grow, lrow), orow) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n))
                    {
                        let total: f64 = grow.iter().sum();
                        for ((o, d), l) in orow.iter_mut().zip(grow).zip(lrow) {
                            *o = d - l.exp() * total;
                        }
                    }
                    add_into(&mut grads, *a, ga);
                }
                Op::L2NormalizeRows(a, norms) => {
                    let n = self.shape(*a)[1];
                    let mut ga = vec![0.0; g.len()];
                    for (((grow, yrow), orow), norm) in g
                        .chunks(n)
                        .zip(out.chunks(n))
                        .zip(ga.chunks_mut(n))
                        .zip(norms)
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(d, y)| d * y).sum();
                        for ((o, d), y) in orow.iter_mut().zip(grow).zip(yrow) {
                            *o = (d - y * dot) / norm;
                        }
                    }
                    add_into(&mut grads, *a, ga);
                }
                Op::PickPerRow(a, indices) => {
                    let n = self.shape(*a)[1];
                    let mut ga = vec![0.0; self.node(*a).value.len()];
                    for (i, (&j, d)) in indices.iter().zip(&g).enumerate() {
                        ga[i * n + j] = *d;
                    }
                    add_into(&mut grads, *a, ga);
                }
                Op::LogFloor(a, floor) => {
                    let ga = g
                        .iter()
                        .zip(self.value(*a))
                        .map(|(d, x)| if *x > *floor { d / x } else { 0.0 })
                        .collect();
                    add_into(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let len = self.node(*a).value.len();
                    add_into(&mut grads, *a, vec![g[0]; len]);
                }
                Op::Mean(a) => {
                    let len = self.node(*a).value.len();
                    add_into(&mut grads, *a, vec![g[0] / len as f64; len]);
                }
            }
        }
        Ok(())
    }
}

fn add_into(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
        slot @ None => *slot = Some(g),
    }
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
