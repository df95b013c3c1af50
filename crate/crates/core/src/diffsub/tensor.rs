//! Dense row-major `f64` tensors and the shape algebra shared by the tape ops.

use rand::Rng;
use rand_distr::StandardNormal;

use super::DiffError;

/// A dense row-major tensor. A rank-0 tensor (`shape == []`) holds one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, DiffError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(DiffError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64, DiffError> {
        if self.data.len() != 1 {
            return Err(DiffError::NotScalar(self.shape.clone()));
        }
        Ok(self.data[0])
    }

    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self, DiffError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(DiffError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Numpy-style broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank {
            a[i + a.len() - rank]
        } else {
            1
        };
        let db = if i + b.len() >= rank {
            b[i + b.len() - rank]
        } else {
            1
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed inside the broadcast shape `out`; broadcast axes get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let own = contiguous_strides(shape);
    let offset = rank - shape.len();
    (0..rank)
        .map(|i| {
            if i < offset || shape[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// True when `small`, left-padded with ones, equals a contiguous suffix block of `out`
/// (so element `i` of the output reads element `i % small.len()`).
fn is_suffix_broadcast(small: &[usize], out: &[usize]) -> bool {
    let offset = out.len() - small.len();
    let first_real = small.iter().position(|&d| d != 1).unwrap_or(small.len());
    small[first_real..] == out[offset + first_real..]
}

/// Visits every output multi-index in row-major order, yielding the flat offsets into `a` and `b`.
fn for_each_broadcast(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n = numel(out);
    if n == 0 {
        return;
    }
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            ia += sa[ax];
            ib += sb[ax];
            if idx[ax] < out[ax] {
                break;
            }
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

pub(crate) fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor, DiffError> {
    let out_shape =
        broadcast_shape(&a.shape, &b.shape).ok_or_else(|| DiffError::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        })?;
    let n = numel(&out_shape);
    let data = if a.shape == b.shape {
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect()
    } else if a.shape == out_shape && is_suffix_broadcast(&b.shape, &out_shape) {
        let m = b.data.len();
        a.data
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, b.data[i % m]))
            .collect()
    } else if b.shape == out_shape && is_suffix_broadcast(&a.shape, &out_shape) {
        let m = a.data.len();
        b.data
            .iter()
            .enumerate()
            .map(|(i, &y)| f(a.data[i % m], y))
            .collect()
    } else {
        let sa = broadcast_strides(&a.shape, &out_shape);
        let sb = broadcast_strides(&b.shape, &out_shape);
        let mut data = vec![0.0; n];
        for_each_broadcast(&out_shape, &sa, &sb, |o, ia, ib| {
            data[o] = f(a.data[ia], b.data[ib]);
        });
        data
    };
    Ok(Tensor {
        shape: out_shape,
        data,
    })
}

/// Sums `grad` (shaped like a broadcast output) back down to `shape`.
pub(crate) fn reduce_to_shape(grad: &Tensor, shape: &[usize]) -> Tensor {
    if grad.shape == shape {
        return grad.clone();
    }
    let mut out = vec![0.0; numel(shape)];
    if is_suffix_broadcast(shape, &grad.shape) {
        let m = out.len();
        for (i, g) in grad.data.iter().enumerate() {
            out[i % m] += g;
        }
    } else {
        let s = broadcast_strides(shape, &grad.shape);
        let zero = vec![0; grad.shape.len()];
        for_each_broadcast(&grad.shape, &s, &zero, |o, i, _| out[i] += grad.data[o]);
    }
    Tensor {
        shape: shape.to_vec(),
        data: out,
    }
}

pub(crate) fn permute(t: &Tensor, axes: &[usize]) -> Tensor {
    let out_shape: Vec<usize> = axes.iter().map(|&a| t.shape[a]).collect();
    // moving only unit axes leaves the row-major layout unchanged
    let moved: Vec<usize> = axes.iter().copied().filter(|&a| t.shape[a] != 1).collect();
    if moved.windows(2).all(|w| w[0] < w[1]) {
        return Tensor {
            shape: out_shape,
            data: t.data.clone(),
        };
    }
    let in_strides = contiguous_strides(&t.shape);
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let zero = vec![0; axes.len()];
    let mut data = vec![0.0; t.data.len()];
    for_each_broadcast(&out_shape, &strides, &zero, |o, i, _| data[o] = t.data[i]);
    Tensor {
        shape: out_shape,
        data,
    }
}

pub(crate) fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// `c (m×n) (+)= op(a) · op(b)` on row-major slices; `ta`/`tb` read the stored matrix transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    if k == 0 {
        if !accumulate {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold exactly m*k, k*n and m*n elements (asserted above) and the
    // strides describe in-bounds row-major (or transposed) layouts of those buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
