//! Dynamic reverse-mode tape.
//!
//! Every forward pass records its operations on a fresh [`Tape`]; [`Tape::backward`]
//! walks the records in reverse and returns the gradient of a scalar root with respect
//! to every node that depends on a `leaf`. A tape is single-threaded (`RefCell`), which
//! matches the one-worker-per-tape training model.

use std::cell::RefCell;

use super::tensor::{
    broadcast_binary, gemm, inverse_permutation, numel, permute, reduce_to_shape, Tensor,
};
use super::DiffError;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddScalar(usize),
    MulScalar(usize, f64),
    MatMul(usize, usize),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        normed: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(usize),
    Silu(usize),
    Embedding {
        table: usize,
        ids: Vec<usize>,
    },
    DepthwiseConv1d {
        x: usize,
        weight: usize,
        bias: usize,
    },
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Narrow {
        x: usize,
        axis: usize,
        start: usize,
    },
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a differentiable computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    check_finite: bool,
}

/// Handle to a recorded value. Cheap to copy; only valid with the tape that made it.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Takes ownership of a gradient; zero-filled when the variable received none.
    pub fn take_or_zeros(&mut self, var: Var<'_>) -> Tensor {
        match self.grads.get_mut(var.id).and_then(|g| g.take()) {
            Some(g) => g,
            None => Tensor::zeros(&var.shape()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that rejects any op producing a non-finite value.
    pub fn checked() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            check_finite: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable input.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_raw(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(
        &self,
        name: &'static str,
        value: Tensor,
        op: Op,
        parents: &[usize],
    ) -> Result<Var<'_>, DiffError> {
        if self.check_finite && !value.all_finite() {
            return Err(DiffError::NonFinite(name.to_string()));
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            parents.iter().any(|&p| nodes[p].requires_grad)
        };
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn with<R>(&self, id: usize, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[id].value)
    }

    fn with2<R>(&self, a: usize, b: usize, f: impl FnOnce(&Tensor, &Tensor) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a].value, &nodes[b].value)
    }

    /// Reverse pass from a one-element `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients, DiffError> {
        let nodes = self.nodes.borrow();
        if nodes[root.id].value.len() != 1 {
            return Err(DiffError::NotScalar(nodes[root.id].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.id] = Some(Tensor::full(nodes[root.id].value.shape(), 1.0));

        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let contributions = backward_node(&nodes, id, &g);
            grads[id] = Some(g);
            for (parent, pg) in contributions {
                if !nodes[parent].requires_grad {
                    continue;
                }
                match &mut grads[parent] {
                    Some(acc) => acc.add_assign(&pg),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> DiffError {
    DiffError::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn normalize_axis(axis: isize, rank: usize) -> Result<usize, DiffError> {
    let a = if axis < 0 { axis + rank as isize } else { axis };
    if a < 0 || a as usize >= rank.max(1) {
        return Err(DiffError::Axis { axis, rank });
    }
    Ok(a as usize)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// `tanh` through one `exp`; absolute error stays near machine epsilon, which is all
/// the GELU needs, at a fraction of the libm cost.
fn tanh_exp(u: f64) -> f64 {
    1.0 - 2.0 / (1.0 + (2.0 * u).exp())
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh_exp(GELU_C * (x + 0.044715 * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = tanh_exp(u);
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

/// Splits a matmul operand shape into (batch dims, rows, cols).
fn split_matrix(shape: &[usize]) -> (&[usize], usize, usize) {
    let r = shape.len();
    (&shape[..r - 2], shape[r - 2], shape[r - 1])
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor, DiffError> {
    if a.ndim() < 2 || b.ndim() < 2 {
        return Err(mismatch("matmul", a.shape(), b.shape()));
    }
    let (lead_a, m, k) = split_matrix(a.shape());
    let (lead_b, kb, n) = split_matrix(b.shape());
    if k != kb {
        return Err(mismatch("matmul", a.shape(), b.shape()));
    }
    let mut shape = lead_a.to_vec();
    shape.extend([m, n]);
    let mut out = vec![0.0; numel(&shape)];
    if lead_b.is_empty() {
        let rows = numel(lead_a) * m;
        gemm(
            rows,
            k,
            n,
            a.data(),
            false,
            b.data(),
            false,
            &mut out,
            false,
        );
    } else if lead_a == lead_b {
        let batches = numel(lead_a);
        for i in 0..batches {
            gemm(
                m,
                k,
                n,
                &a.data()[i * m * k..(i + 1) * m * k],
                false,
                &b.data()[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
    } else {
        return Err(mismatch("matmul", a.shape(), b.shape()));
    }
    Tensor::new(shape, out)
}

fn matmul_backward(a: &Tensor, b: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (lead_a, m, k) = split_matrix(a.shape());
    let (lead_b, _, n) = split_matrix(b.shape());
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    if lead_b.is_empty() {
        let rows = numel(lead_a) * m;
        gemm(rows, n, k, g.data(), false, b.data(), true, &mut ga, false);
        gemm(k, rows, n, a.data(), true, g.data(), false, &mut gb, false);
    } else {
        let batches = numel(lead_a);
        for i in 0..batches {
            let gi = &g.data()[i * m * n..(i + 1) * m * n];
            gemm(
                m,
                n,
                k,
                gi,
                false,
                &b.data()[i * k * n..(i + 1) * k * n],
                true,
                &mut ga[i * m * k..(i + 1) * m * k],
                false,
            );
            gemm(
                k,
                m,
                n,
                &a.data()[i * m * k..(i + 1) * m * k],
                true,
                gi,
                false,
                &mut gb[i * k * n..(i + 1) * k * n],
                false,
            );
        }
    }
    (
        Tensor::new(a.shape().to_vec(), ga).expect("shape"),
        Tensor::new(b.shape().to_vec(), gb).expect("shape"),
    )
}

/// (outer, axis length, inner) decomposition of a shape around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

fn backward_node(nodes: &[Node], id: usize, g: &Tensor) -> Vec<(usize, Tensor)> {
    let val = |i: usize| &nodes[i].value;
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf => Vec::new(),
        Op::Add(a, b) => vec![
            (*a, reduce_to_shape(g, val(*a).shape())),
            (*b, reduce_to_shape(g, val(*b).shape())),
        ],
        Op::Sub(a, b) => vec![
            (*a, reduce_to_shape(g, val(*a).shape())),
            (*b, reduce_to_shape(&g.map(|x| -x), val(*b).shape())),
        ],
        Op::Mul(a, b) => {
            let ga = broadcast_binary("mul", g, val(*b), |x, y| x * y).expect("recorded shapes");
            let gb = broadcast_binary("mul", g, val(*a), |x, y| x * y).expect("recorded shapes");
            vec![
                (*a, reduce_to_shape(&ga, val(*a).shape())),
                (*b, reduce_to_shape(&gb, val(*b).shape())),
            ]
        }
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::MulScalar(a, c) => vec![(*a, g.map(|x| x * c))],
        Op::MatMul(a, b) => {
            let (ga, gb) = matmul_backward(val(*a), val(*b), g);
            vec![(*a, ga), (*b, gb)]
        }
        Op::Reshape(a) => vec![(
            *a,
            g.clone().reshaped(val(*a).shape()).expect("recorded shape"),
        )],
        Op::Permute(a, axes) => vec![(*a, permute(g, &inverse_permutation(axes)))],
        Op::Softmax(a) => {
            let d = *out.shape().last().unwrap_or(&1);
            let mut gi = vec![0.0; g.len()];
            if d > 0 {
                for ((yrow, grow), orow) in out
                    .data()
                    .chunks(d)
                    .zip(g.data().chunks(d))
                    .zip(gi.chunks_mut(d))
                {
                    let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for ((o, y), gg) in orow.iter_mut().zip(yrow).zip(grow) {
                        *o = y * (gg - dot);
                    }
                }
            }
            vec![(*a, Tensor::new(g.shape().to_vec(), gi).expect("shape"))]
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            normed,
            rstd,
        } => {
            let d = *out.shape().last().expect("rank >= 1");
            let gamma = val(*gain).data();
            let mut gx = vec![0.0; g.len()];
            let mut ggain = vec![0.0; d];
            let mut gbias = vec![0.0; d];
            let mut dxhat = vec![0.0; d];
            for (r, (grow, xrow)) in g.data().chunks(d).zip(normed.chunks(d)).enumerate() {
                for j in 0..d {
                    ggain[j] += grow[j] * xrow[j];
                    gbias[j] += grow[j];
                    dxhat[j] = grow[j] * gamma[j];
                }
                let s1: f64 = dxhat.iter().sum();
                let s2: f64 = dxhat.iter().zip(xrow).map(|(a, b)| a * b).sum();
                let scale = rstd[r] / d as f64;
                for j in 0..d {
                    gx[r * d + j] = scale * (d as f64 * dxhat[j] - s1 - xrow[j] * s2);
                }
            }
            vec![
                (*x, Tensor::new(g.shape().to_vec(), gx).expect("shape")),
                (*gain, Tensor::new(vec![d], ggain).expect("shape")),
                (*bias, Tensor::new(vec![d], gbias).expect("shape")),
            ]
        }
        Op::Gelu(a) => {
            let x = val(*a);
            let data = x
                .data()
                .iter()
                .zip(g.data())
                .map(|(&x, &g)| g * gelu_grad(x))
                .collect();
            vec![(*a, Tensor::new(x.shape().to_vec(), data).expect("shape"))]
        }
        Op::Silu(a) => {
            let x = val(*a);
            let data = x
                .data()
                .iter()
                .zip(g.data())
                .map(|(&x, &g)| {
                    let s = sigmoid(x);
                    g * s * (1.0 + x * (1.0 - s))
                })
                .collect();
            vec![(*a, Tensor::new(x.shape().to_vec(), data).expect("shape"))]
        }
        Op::Embedding { table, ids } => {
            let t = val(*table);
            let d = t.shape()[1];
            let mut gt = vec![0.0; t.len()];
            for (row, &id) in ids.iter().enumerate() {
                for j in 0..d {
                    gt[id * d + j] += g.data()[row * d + j];
                }
            }
            vec![(*table, Tensor::new(t.shape().to_vec(), gt).expect("shape"))]
        }
        Op::DepthwiseConv1d { x, weight, bias } => {
            let xv = val(*x);
            let w = val(*weight);
            let (k, c) = (w.shape()[0], w.shape()[1]);
            let l = xv.shape()[xv.ndim() - 2];
            let pad = k / 2;
            let batches = xv.len() / (l * c).max(1);
            let mut gx = vec![0.0; xv.len()];
            let mut gw = vec![0.0; w.len()];
            let mut gb = vec![0.0; c];
            for bi in 0..batches {
                let base = bi * l * c;
                for t in 0..l {
                    for ch in 0..c {
                        let go = g.data()[base + t * c + ch];
                        gb[ch] += go;
                        for kk in 0..k {
                            let src = t as isize + kk as isize - pad as isize;
                            if src < 0 || src >= l as isize {
                                continue;
                            }
                            let si = base + src as usize * c + ch;
                            gx[si] += go * w.data()[kk * c + ch];
                            gw[kk * c + ch] += go * xv.data()[si];
                        }
                    }
                }
            }
            vec![
                (*x, Tensor::new(xv.shape().to_vec(), gx).expect("shape")),
                (*weight, Tensor::new(w.shape().to_vec(), gw).expect("shape")),
                (*bias, Tensor::new(vec![c], gb).expect("shape")),
            ]
        }
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = axis_split(g.shape(), *axis);
            let mut offset = 0;
            parts
                .iter()
                .map(|&p| {
                    let shape = val(p).shape().to_vec();
                    let len = shape[*axis];
                    let mut data = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        data.extend_from_slice(&g.data()[start..start + len * inner]);
                    }
                    offset += len;
                    (p, Tensor::new(shape, data).expect("shape"))
                })
                .collect()
        }
        Op::Narrow { x, axis, start } => {
            let shape = val(*x).shape().to_vec();
            let (outer, total, inner) = axis_split(&shape, *axis);
            let len = g.shape()[*axis];
            let mut data = vec![0.0; numel(&shape)];
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                let src = o * len * inner;
                data[dst..dst + len * inner].copy_from_slice(&g.data()[src..src + len * inner]);
            }
            vec![(*x, Tensor::new(shape, data).expect("shape"))]
        }
        Op::Sum(a) => {
            let gv = g.data()[0];
            vec![(*a, Tensor::full(val(*a).shape(), gv))]
        }
        Op::Mean(a) => {
            let n = val(*a).len().max(1) as f64;
            let gv = g.data()[0] / n;
            vec![(*a, Tensor::full(val(*a).shape(), gv))]
        }
        Op::SumAxis(a, axis) => {
            let shape = val(*a).shape().to_vec();
            let (outer, len, inner) = axis_split(&shape, *axis);
            let mut data = vec![0.0; numel(&shape)];
            for o in 0..outer {
                for i in 0..len {
                    let dst = (o * len + i) * inner;
                    data[dst..dst + inner].copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
            }
            vec![(*a, Tensor::new(shape, data).expect("shape"))]
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.with(self.id, |t| t.shape().to_vec())
    }

    pub fn value(&self) -> Tensor {
        self.tape.with(self.id, |t| t.clone())
    }

    pub fn item(&self) -> Result<f64, DiffError> {
        self.tape.with(self.id, |t| t.item())
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>, DiffError> {
        let v = self
            .tape
            .with2(self.id, other.id, |a, b| broadcast_binary(name, a, b, f))?;
        self.tape.push(name, v, op, &[self.id, other.id])
    }

    /// Broadcasting elementwise sum.
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>, DiffError> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>, DiffError> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    /// Broadcasting elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>, DiffError> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| t.map(|x| x + c));
        self.tape
            .push("add_scalar", v, Op::AddScalar(self.id), &[self.id])
    }

    pub fn mul_scalar(self, c: f64) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| t.map(|x| x * c));
        self.tape
            .push("mul_scalar", v, Op::MulScalar(self.id, c), &[self.id])
    }

    pub fn square(self) -> Result<Var<'t>, DiffError> {
        self.mul(self)
    }

    /// `[.., m, k] x [k, n]` (shared right operand) or `[B.., m, k] x [B.., k, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with2(self.id, other.id, matmul_forward)?;
        self.tape.push(
            "matmul",
            v,
            Op::MatMul(self.id, other.id),
            &[self.id, other.id],
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| t.clone().reshaped(shape))?;
        self.tape
            .push("reshape", v, Op::Reshape(self.id), &[self.id])
    }

    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>, DiffError> {
        let shape = self.shape();
        let mut seen = axes.to_vec();
        seen.sort_unstable();
        if axes.len() != shape.len() || seen.iter().enumerate().any(|(i, &a)| i != a) {
            return Err(mismatch("permute", &shape, axes));
        }
        let v = self.tape.with(self.id, |t| permute(t, axes));
        self.tape.push(
            "permute",
            v,
            Op::Permute(self.id, axes.to_vec()),
            &[self.id],
        )
    }

    /// Swaps the last two axes.
    pub fn transpose(self) -> Result<Var<'t>, DiffError> {
        let r = self.shape().len();
        if r < 2 {
            return Err(DiffError::Axis { axis: -2, rank: r });
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    /// Softmax over the last axis.
    pub fn softmax(self) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| {
            let d = *t.shape().last().unwrap_or(&1);
            let mut data = t.data().to_vec();
            if d > 0 {
                for row in data.chunks_mut(d) {
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut s = 0.0;
                    for x in row.iter_mut() {
                        *x = (*x - m).exp();
                        s += *x;
                    }
                    for x in row.iter_mut() {
                        *x /= s;
                    }
                }
            }
            Tensor::new(t.shape().to_vec(), data)
        })?;
        self.tape
            .push("softmax", v, Op::Softmax(self.id), &[self.id])
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` (both `[d]`).
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, DiffError> {
        let nodes = self.tape.nodes.borrow();
        let x = &nodes[self.id].value;
        let d = *x
            .shape()
            .last()
            .ok_or(DiffError::Axis { axis: -1, rank: 0 })?;
        let (gv, bv) = (&nodes[gain.id].value, &nodes[bias.id].value);
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(mismatch("layer_norm", x.shape(), gv.shape()));
        }
        let rows = x.len() / d.max(1);
        let mut normed = vec![0.0; x.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            let row = &x.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let n = (row[j] - mean) * rs;
                normed[r * d + j] = n;
                out[r * d + j] = n * gv.data()[j] + bv.data()[j];
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        drop(nodes);
        self.tape.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                bias: bias.id,
                normed,
                rstd,
            },
            &[self.id, gain.id, bias.id],
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(self) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| t.map(gelu));
        self.tape.push("gelu", v, Op::Gelu(self.id), &[self.id])
    }

    pub fn silu(self) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| t.map(|x| x * sigmoid(x)));
        self.tape.push("silu", v, Op::Silu(self.id), &[self.id])
    }

    /// Row lookup in a `[vocab, d]` table; returns `[ids.len(), d]`.
    pub fn embedding(self, ids: &[usize]) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| {
            if t.ndim() != 2 {
                return Err(mismatch("embedding", t.shape(), &[]));
            }
            let (vocab, d) = (t.shape()[0], t.shape()[1]);
            let mut data = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                if id >= vocab {
                    return Err(DiffError::Index {
                        index: id,
                        len: vocab,
                    });
                }
                data.extend_from_slice(&t.data()[id * d..(id + 1) * d]);
            }
            Tensor::new(vec![ids.len(), d], data)
        })?;
        self.tape.push(
            "embedding",
            v,
            Op::Embedding {
                table: self.id,
                ids: ids.to_vec(),
            },
            &[self.id],
        )
    }

    /// Per-channel 1-D convolution over axis -2 of `[.., len, channels]`, zero "same" padding.
    /// `weight` is `[k, channels]` with odd `k`; `bias` is `[channels]`.
    pub fn depthwise_conv1d(self, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>, DiffError> {
        let nodes = self.tape.nodes.borrow();
        let (x, w, b) = (
            &nodes[self.id].value,
            &nodes[weight.id].value,
            &nodes[bias.id].value,
        );
        if x.ndim() < 2 || w.ndim() != 2 || w.shape()[0] % 2 == 0 {
            return Err(mismatch("depthwise_conv1d", x.shape(), w.shape()));
        }
        let (k, c) = (w.shape()[0], w.shape()[1]);
        let l = x.shape()[x.ndim() - 2];
        if x.shape()[x.ndim() - 1] != c || b.shape() != [c] {
            return Err(mismatch("depthwise_conv1d", x.shape(), w.shape()));
        }
        let pad = k / 2;
        let batches = x.len() / (l * c).max(1);
        let mut out = vec![0.0; x.len()];
        for bi in 0..batches {
            let base = bi * l * c;
            for t in 0..l {
                for ch in 0..c {
                    let mut acc = b.data()[ch];
                    for kk in 0..k {
                        let src = t as isize + kk as isize - pad as isize;
                        if src >= 0 && src < l as isize {
                            acc += w.data()[kk * c + ch] * x.data()[base + src as usize * c + ch];
                        }
                    }
                    out[base + t * c + ch] = acc;
                }
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        drop(nodes);
        self.tape.push(
            "depthwise_conv1d",
            value,
            Op::DepthwiseConv1d {
                x: self.id,
                weight: weight.id,
                bias: bias.id,
            },
            &[self.id, weight.id, bias.id],
        )
    }

    /// Restricts `axis` to `start..start + len`.
    pub fn narrow(self, axis: isize, start: usize, len: usize) -> Result<Var<'t>, DiffError> {
        let shape = self.shape();
        let ax = normalize_axis(axis, shape.len())?;
        if start + len > shape[ax] {
            return Err(DiffError::Index {
                index: start + len,
                len: shape[ax],
            });
        }
        let v = self.tape.with(self.id, |t| {
            let (outer, total, inner) = axis_split(t.shape(), ax);
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let s = (o * total + start) * inner;
                data.extend_from_slice(&t.data()[s..s + len * inner]);
            }
            let mut out_shape = t.shape().to_vec();
            out_shape[ax] = len;
            Tensor::new(out_shape, data)
        })?;
        self.tape.push(
            "narrow",
            v,
            Op::Narrow {
                x: self.id,
                axis: ax,
                start,
            },
            &[self.id],
        )
    }

    pub fn sum(self) -> Result<Var<'t>, DiffError> {
        let v = self
            .tape
            .with(self.id, |t| Tensor::scalar(t.data().iter().sum()));
        self.tape.push("sum", v, Op::Sum(self.id), &[self.id])
    }

    pub fn mean(self) -> Result<Var<'t>, DiffError> {
        let v = self.tape.with(self.id, |t| {
            Tensor::scalar(t.data().iter().sum::<f64>() / t.len().max(1) as f64)
        });
        self.tape.push("mean", v, Op::Mean(self.id), &[self.id])
    }

    /// Sums out `axis` (the axis is removed).
    pub fn sum_axis(self, axis: isize) -> Result<Var<'t>, DiffError> {
        let shape = self.shape();
        let ax = normalize_axis(axis, shape.len())?;
        let v = self.tape.with(self.id, |t| {
            let (outer, len, inner) = axis_split(t.shape(), ax);
            let mut data = vec![0.0; outer * inner];
            for o in 0..outer {
                for i in 0..len {
                    let src = (o * len + i) * inner;
                    for j in 0..inner {
                        data[o * inner + j] += t.data()[src + j];
                    }
                }
            }
            let mut out_shape = t.shape().to_vec();
            out_shape.remove(ax);
            Tensor::new(out_shape, data)
        })?;
        self.tape
            .push("sum_axis", v, Op::SumAxis(self.id, ax), &[self.id])
    }

    pub fn mean_axis(self, axis: isize) -> Result<Var<'t>, DiffError> {
        let shape = self.shape();
        let ax = normalize_axis(axis, shape.len())?;
        let n = shape[ax].max(1) as f64;
        self.sum_axis(axis)?.mul_scalar(1.0 / n)
    }
}

/// Joins `parts` along `axis`; all other extents must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: isize) -> Result<Var<'t>, DiffError> {
    let first = parts.first().ok_or(DiffError::Empty("concat"))?;
    let tape = first.tape;
    let nodes = tape.nodes.borrow();
    let shape0 = nodes[first.id].value.shape().to_vec();
    let ax = normalize_axis(axis, shape0.len())?;
    let mut total = 0;
    for p in parts {
        let s = nodes[p.id].value.shape();
        let compatible = s.len() == shape0.len()
            && s.iter()
                .zip(&shape0)
                .enumerate()
                .all(|(i, (a, b))| i == ax || a == b);
        if !compatible {
            return Err(mismatch("concat", &shape0, s));
        }
        total += s[ax];
    }
    let mut out_shape = shape0.clone();
    out_shape[ax] = total;
    let (outer, _, inner) = axis_split(&out_shape, ax);
    let mut data = Vec::with_capacity(numel(&out_shape));
    for o in 0..outer {
        for p in parts {
            let t = &nodes[p.id].value;
            let len = t.shape()[ax] * inner;
            data.extend_from_slice(&t.data()[o * len..(o + 1) * len]);
        }
    }
    let value = Tensor::new(out_shape, data)?;
    drop(nodes);
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    tape.push(
        "concat",
        value,
        Op::Concat {
            parts: ids.clone(),
            axis: ax,
        },
        &ids,
    )
}

/// `softmax(q kᵀ / sqrt(d) + mask) v` over the last two axes.
/// `q: [.., t, d]`, `k: [.., l, d]`, `v: [.., l, dv]`; `mask` is an additive term
/// broadcastable to `[.., t, l]`.
pub fn scaled_dot_product_attention<'t>(
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    mask: Option<Var<'t>>,
) -> Result<Var<'t>, DiffError> {
    let d = *q
        .shape()
        .last()
        .ok_or(DiffError::Axis { axis: -1, rank: 0 })?;
    let mut scores = q
        .matmul(k.transpose()?)?
        .mul_scalar(1.0 / (d as f64).sqrt())?;
    if let Some(m) = mask {
        scores = scores.add(m)?;
    }
    scores.softmax()?.matmul(v)
}
