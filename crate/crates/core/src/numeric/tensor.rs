//! Dense row-major tensors with reverse-mode differentiation.
//!
//! Every operation that consumes tracked tensors records its inputs so that
//! [`Tensor::backward`] can replay the graph in reverse topological order and
//! accumulate gradients into each `requires_grad` leaf. Shapes are dynamic
//! (`Vec<usize>`), storage is a flat row-major buffer.

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::iter::Sum;
use std::rc::Rc;

use crate::error::NumericError;

type Result<T> = std::result::Result<T, NumericError>;

/// Element type accepted by the tensor machinery. Implemented for `f32` and
/// `f64`; verification paths instantiate `f64`, training defaults to `f32`.
pub trait Scalar:
    num_traits::Float + num_traits::NumAssign + Sum + fmt::Debug + fmt::Display + Default + 'static
{
    const DTYPE: &'static str;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// True when operations record the graph needed for `backward`.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Runs `f` with graph recording disabled (forward-only evaluation).
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

/// Recorded provenance of a tensor: the operation and its input handles.
enum Parents<F: Scalar> {
    Leaf,
    Add(Tensor<F>, Tensor<F>),
    Sub(Tensor<F>, Tensor<F>),
    Mul(Tensor<F>, Tensor<F>),
    /// rhs shape is a suffix of lhs shape, broadcast over leading dims.
    AddBroadcast(Tensor<F>, Tensor<F>),
    MulBroadcast(Tensor<F>, Tensor<F>),
    Scale(Tensor<F>, F),
    AddScalar(Tensor<F>),
    MatMul(Tensor<F>, Tensor<F>),
    Relu(Tensor<F>),
    /// Mask over the last axis shared by every row; `None` = all valid.
    Softmax(Tensor<F>, Option<Vec<bool>>),
    LogSoftmax(Tensor<F>),
    LayerNorm(Tensor<F>, F),
    /// Keep-mask already scaled by 1/(1-p).
    Dropout(Tensor<F>, Vec<F>),
    SumAxis(Tensor<F>, usize),
    SumAll(Tensor<F>),
    Reshape(Tensor<F>),
    Permute(Tensor<F>, Vec<usize>),
    Concat(Vec<Tensor<F>>, usize),
    Narrow(Tensor<F>, usize, usize, usize),
    /// Row gather along axis 0.
    IndexSelect(Tensor<F>, Vec<usize>),
}

struct Node<F: Scalar> {
    data: Vec<F>,
    shape: Vec<usize>,
    grad: Option<Vec<F>>,
    requires_grad: bool,
    parents: Parents<F>,
}

/// Shared handle to a node in the computation graph.
pub struct Tensor<F: Scalar>(Rc<RefCell<Node<F>>>);

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<F: Scalar> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.borrow();
        write!(f, "Tensor{:?}(requires_grad={})", n.shape, n.requires_grad)
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<F: Scalar> Tensor<F> {
    // ── construction ──────────────────────────────────────────────────

    pub fn from_vec(data: Vec<F>, shape: &[usize]) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(NumericError::ShapeMismatch {
                op: "from_vec",
                details: format!("data length {} vs shape {:?}", data.len(), shape),
            });
        }
        Ok(Self::new(data, shape.to_vec(), false, Parents::Leaf))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(vec![F::zero(); numel(shape)], shape.to_vec(), false, Parents::Leaf)
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        Self::new(vec![v; numel(shape)], shape.to_vec(), false, Parents::Leaf)
    }

    pub fn scalar(v: F) -> Self {
        Self::new(vec![v], vec![], false, Parents::Leaf)
    }

    /// Leaf tensor that participates in gradient accumulation.
    pub fn parameter(data: Vec<F>, shape: &[usize]) -> Result<Self> {
        let t = Self::from_vec(data, shape)?;
        t.0.borrow_mut().requires_grad = true;
        Ok(t)
    }

    fn new(data: Vec<F>, shape: Vec<usize>, requires_grad: bool, parents: Parents<F>) -> Self {
        Tensor(Rc::new(RefCell::new(Node { data, shape, grad: None, requires_grad, parents })))
    }

    fn from_op(data: Vec<F>, shape: Vec<usize>, parents: Parents<F>, tracked: bool) -> Self {
        if tracked && grad_enabled() {
            Self::new(data, shape, true, parents)
        } else {
            Self::new(data, shape, false, Parents::Leaf)
        }
    }

    // ── accessors ─────────────────────────────────────────────────────

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.borrow().requires_grad
    }

    /// Zero-copy view of the underlying buffer.
    pub fn values(&self) -> Ref<'_, [F]> {
        Ref::map(self.0.borrow(), |n| n.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.0.borrow().data.clone()
    }

    pub fn item(&self) -> Result<F> {
        let n = self.0.borrow();
        if n.data.len() != 1 {
            return Err(NumericError::ShapeMismatch {
                op: "item",
                details: format!("expected single element, shape {:?}", n.shape),
            });
        }
        Ok(n.data[0])
    }

    pub fn grad(&self) -> Option<Vec<F>> {
        self.0.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.0.borrow_mut().grad = None;
    }

    /// Overwrites the buffer in place (optimizer steps, finite differences).
    pub fn set_data(&self, data: &[F]) {
        let mut n = self.0.borrow_mut();
        assert_eq!(n.data.len(), data.len(), "set_data length mismatch");
        n.data.copy_from_slice(data);
    }

    /// In-place update given the accumulated gradient. No-op when no gradient
    /// has been accumulated.
    pub fn apply_update(&self, mut f: impl FnMut(&mut [F], &[F])) {
        let mut n = self.0.borrow_mut();
        let Node { data, grad, .. } = &mut *n;
        if let Some(g) = grad {
            f(data.as_mut_slice(), g.as_slice());
        }
    }

    /// Detached constant copy sharing no graph history.
    pub fn detach(&self) -> Self {
        let n = self.0.borrow();
        Self::new(n.data.clone(), n.shape.clone(), false, Parents::Leaf)
    }

    fn ptr(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }

    // ── elementwise ───────────────────────────────────────────────────

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_same_shape(other, "add", |a, b| a + b, Parents::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_same_shape(other, "sub", |a, b| a - b, Parents::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_same_shape(other, "mul", |a, b| a * b, Parents::Mul)
    }

    fn zip_same_shape(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(F, F) -> F,
        parent: impl Fn(Tensor<F>, Tensor<F>) -> Parents<F>,
    ) -> Result<Self> {
        let (a, b) = (self.0.borrow(), other.0.borrow());
        if a.shape != b.shape {
            return Err(NumericError::ShapeMismatch {
                op,
                details: format!("{:?} vs {:?}", a.shape, b.shape),
            });
        }
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
        let tracked = a.requires_grad || b.requires_grad;
        let shape = a.shape.clone();
        drop((a, b));
        Ok(Self::from_op(data, shape, parent(self.clone(), other.clone()), tracked))
    }

    /// `self + rhs` where `rhs.shape` is a suffix of `self.shape`.
    pub fn add_broadcast(&self, rhs: &Self) -> Result<Self> {
        self.broadcast_op(rhs, "add_broadcast", |a, b| a + b, Parents::AddBroadcast)
    }

    /// `self * rhs` where `rhs.shape` is a suffix of `self.shape`.
    pub fn mul_broadcast(&self, rhs: &Self) -> Result<Self> {
        self.broadcast_op(rhs, "mul_broadcast", |a, b| a * b, Parents::MulBroadcast)
    }

    fn broadcast_op(
        &self,
        rhs: &Self,
        op: &'static str,
        f: impl Fn(F, F) -> F,
        parent: impl Fn(Tensor<F>, Tensor<F>) -> Parents<F>,
    ) -> Result<Self> {
        let (a, b) = (self.0.borrow(), rhs.0.borrow());
        if a.shape.len() < b.shape.len() || !a.shape.ends_with(&b.shape) {
            return Err(NumericError::ShapeMismatch {
                op,
                details: format!("{:?} does not end with {:?}", a.shape, b.shape),
            });
        }
        let bn = b.data.len().max(1);
        let data: Vec<F> =
            a.data.iter().enumerate().map(|(i, &x)| f(x, b.data[i % bn])).collect();
        let tracked = a.requires_grad || b.requires_grad;
        let shape = a.shape.clone();
        drop((a, b));
        Ok(Self::from_op(data, shape, parent(self.clone(), rhs.clone()), tracked))
    }

    pub fn scale(&self, c: F) -> Self {
        let n = self.0.borrow();
        let data = n.data.iter().map(|&x| x * c).collect();
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Self::from_op(data, shape, Parents::Scale(self.clone(), c), tracked)
    }

    pub fn add_scalar(&self, c: F) -> Self {
        let n = self.0.borrow();
        let data = n.data.iter().map(|&x| x + c).collect();
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Self::from_op(data, shape, Parents::AddScalar(self.clone()), tracked)
    }

    pub fn neg(&self) -> Self {
        self.scale(-F::one())
    }

    pub fn relu(&self) -> Self {
        let n = self.0.borrow();
        let data = n.data.iter().map(|&x| if x > F::zero() { x } else { F::zero() }).collect();
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Self::from_op(data, shape, Parents::Relu(self.clone()), tracked)
    }

    // ── matrix product ────────────────────────────────────────────────

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        let (a, b) = (self.0.borrow(), rhs.0.borrow());
        if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
            return Err(NumericError::ShapeMismatch {
                op: "matmul",
                details: format!("{:?} x {:?}", a.shape, b.shape),
            });
        }
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let data = matmul_nn(&a.data, &b.data, m, k, n);
        let tracked = a.requires_grad || b.requires_grad;
        drop((a, b));
        Ok(Self::from_op(data, vec![m, n], Parents::MatMul(self.clone(), rhs.clone()), tracked))
    }

    // ── row-wise nonlinearities (last axis) ───────────────────────────

    /// Softmax over the last axis. `mask`, when given, marks valid positions
    /// shared by every row; masked positions come out exactly zero. A row
    /// with no valid position is rejected.
    pub fn softmax_last(&self, mask: Option<&[bool]>) -> Result<Self> {
        let n = self.0.borrow();
        let cols = *n.shape.last().ok_or(NumericError::ShapeMismatch {
            op: "softmax_last",
            details: "scalar input".into(),
        })?;
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(NumericError::ShapeMismatch {
                    op: "softmax_last",
                    details: format!("mask length {} vs last axis {}", m.len(), cols),
                });
            }
            if !m.iter().any(|&v| v) {
                return Err(NumericError::AllMasked { row: 0 });
            }
        }
        let rows = n.data.len() / cols;
        let mut data = vec![F::zero(); n.data.len()];
        for r in 0..rows {
            let row = &n.data[r * cols..(r + 1) * cols];
            let mut max = F::neg_infinity();
            for (j, &x) in row.iter().enumerate() {
                if mask.map_or(true, |m| m[j]) && x > max {
                    max = x;
                }
            }
            let mut sum = F::zero();
            for j in 0..cols {
                if mask.map_or(true, |m| m[j]) {
                    let e = (row[j] - max).exp();
                    data[r * cols + j] = e;
                    sum += e;
                }
            }
            for j in 0..cols {
                data[r * cols + j] /= sum;
            }
        }
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Ok(Self::from_op(
            data,
            shape,
            Parents::Softmax(self.clone(), mask.map(<[bool]>::to_vec)),
            tracked,
        ))
    }

    /// Numerically stable log-softmax over the last axis.
    pub fn log_softmax_last(&self) -> Result<Self> {
        let n = self.0.borrow();
        let cols = *n.shape.last().ok_or(NumericError::ShapeMismatch {
            op: "log_softmax_last",
            details: "scalar input".into(),
        })?;
        let rows = n.data.len() / cols;
        let mut data = vec![F::zero(); n.data.len()];
        for r in 0..rows {
            let row = &n.data[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let log_sum = row.iter().map(|&x| (x - max).exp()).sum::<F>().ln();
            for j in 0..cols {
                data[r * cols + j] = row[j] - max - log_sum;
            }
        }
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Ok(Self::from_op(data, shape, Parents::LogSoftmax(self.clone()), tracked))
    }

    /// Plain (non-affine) layer normalization over the last axis.
    pub fn layer_norm_last(&self, eps: F) -> Result<Self> {
        let n = self.0.borrow();
        let cols = *n.shape.last().ok_or(NumericError::ShapeMismatch {
            op: "layer_norm_last",
            details: "scalar input".into(),
        })?;
        let rows = n.data.len() / cols;
        let inv_cols = F::one() / F::from_f64(cols as f64);
        let mut data = vec![F::zero(); n.data.len()];
        for r in 0..rows {
            let row = &n.data[r * cols..(r + 1) * cols];
            let mean = row.iter().cloned().sum::<F>() * inv_cols;
            let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<F>() * inv_cols;
            let rstd = F::one() / (var + eps).sqrt();
            for j in 0..cols {
                data[r * cols + j] = (row[j] - mean) * rstd;
            }
        }
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Ok(Self::from_op(data, shape, Parents::LayerNorm(self.clone(), eps), tracked))
    }

    /// Inverted dropout: keeps each element with probability `1-rate` and
    /// scales survivors by `1/(1-rate)`.
    pub fn dropout(&self, rate: f64, rng: &mut impl rand::Rng) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NumericError::InvalidArgument(format!("dropout rate {rate}")));
        }
        if rate == 0.0 {
            return Ok(self.clone());
        }
        let n = self.0.borrow();
        let keep_scale = F::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<F> = (0..n.data.len())
            .map(|_| if rng.gen::<f64>() >= rate { keep_scale } else { F::zero() })
            .collect();
        let data = n.data.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let tracked = n.requires_grad;
        let shape = n.shape.clone();
        drop(n);
        Ok(Self::from_op(data, shape, Parents::Dropout(self.clone(), mask), tracked))
    }

    // ── reductions ────────────────────────────────────────────────────

    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        let n = self.0.borrow();
        if axis >= n.shape.len() {
            return Err(NumericError::ShapeMismatch {
                op: "sum_axis",
                details: format!("axis {} of {:?}", axis, n.shape),
            });
        }
        let (outer, len, inner) = axis_split(&n.shape, axis);
        let mut out_shape = n.shape.clone();
        out_shape.remove(axis);
        let mut data = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = (o * len + a) * inner;
                let dst = o * inner;
                for i in 0..inner {
                    data[dst + i] += n.data[src + i];
                }
            }
        }
        let tracked = n.requires_grad;
        drop(n);
        Ok(Self::from_op(data, out_shape, Parents::SumAxis(self.clone(), axis), tracked))
    }

    /// Mean over one axis.
    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        let len = self.shape().get(axis).copied().unwrap_or(0).max(1);
        Ok(self.sum_axis(axis)?.scale(F::from_f64(1.0 / len as f64)))
    }

    pub fn sum_all(&self) -> Self {
        let n = self.0.borrow();
        let total = n.data.iter().cloned().sum();
        let tracked = n.requires_grad;
        drop(n);
        Self::from_op(vec![total], vec![], Parents::SumAll(self.clone()), tracked)
    }

    // ── shape manipulation ────────────────────────────────────────────

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = self.0.borrow();
        if numel(shape) != n.data.len() {
            return Err(NumericError::ShapeMismatch {
                op: "reshape",
                details: format!("{:?} -> {:?}", n.shape, shape),
            });
        }
        let data = n.data.clone();
        let tracked = n.requires_grad;
        drop(n);
        Ok(Self::from_op(data, shape.to_vec(), Parents::Reshape(self.clone()), tracked))
    }

    /// Reorders axes, materializing the data.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.0.borrow();
        let rank = n.shape.len();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(NumericError::ShapeMismatch {
                op: "permute",
                details: format!("perm {:?} for rank {}", perm, rank),
            });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| n.shape[p]).collect();
        let data = permute_data(&n.data, &n.shape, perm, &out_shape);
        let tracked = n.requires_grad;
        drop(n);
        Ok(Self::from_op(data, out_shape, Parents::Permute(self.clone(), perm.to_vec()), tracked))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor<F>], axis: usize) -> Result<Self> {
        if parts.is_empty() {
            return Err(NumericError::InvalidArgument("concat of zero tensors".into()));
        }
        let first = parts[0].shape();
        if axis >= first.len() {
            return Err(NumericError::ShapeMismatch {
                op: "concat",
                details: format!("axis {} of {:?}", axis, first),
            });
        }
        let mut axis_total = 0;
        for p in parts {
            let s = p.shape();
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(NumericError::ShapeMismatch {
                    op: "concat",
                    details: format!("{:?} vs {:?}", s, first),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut data = vec![F::zero(); numel(&out_shape)];
        let mut offset = 0;
        for p in parts {
            let s = p.shape();
            let len = s[axis];
            let src = p.0.borrow();
            for o in 0..outer {
                for a in 0..len {
                    let si = (o * len + a) * inner;
                    let di = (o * axis_total + offset + a) * inner;
                    data[di..di + inner].copy_from_slice(&src.data[si..si + inner]);
                }
            }
            offset += len;
        }
        let tracked = parts.iter().any(Tensor::requires_grad);
        Ok(Self::from_op(data, out_shape, Parents::Concat(parts.to_vec(), axis), tracked))
    }

    /// Contiguous slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let n = self.0.borrow();
        if axis >= n.shape.len() || start + len > n.shape[axis] {
            return Err(NumericError::ShapeMismatch {
                op: "narrow",
                details: format!("axis {} [{}, {}) of {:?}", axis, start, start + len, n.shape),
            });
        }
        let (outer, full, inner) = axis_split(&n.shape, axis);
        let mut out_shape = n.shape.clone();
        out_shape[axis] = len;
        let mut data = vec![F::zero(); outer * len * inner];
        for o in 0..outer {
            for a in 0..len {
                let si = (o * full + start + a) * inner;
                let di = (o * len + a) * inner;
                data[di..di + inner].copy_from_slice(&n.data[si..si + inner]);
            }
        }
        let tracked = n.requires_grad;
        drop(n);
        Ok(Self::from_op(data, out_shape, Parents::Narrow(self.clone(), axis, start, len), tracked))
    }

    /// Gathers rows along axis 0 (indices may repeat).
    pub fn index_select0(&self, indices: &[usize]) -> Result<Self> {
        let n = self.0.borrow();
        if n.shape.is_empty() {
            return Err(NumericError::ShapeMismatch {
                op: "index_select0",
                details: "scalar input".into(),
            });
        }
        let rows = n.shape[0];
        let inner = n.data.len() / rows.max(1);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(NumericError::InvalidArgument(format!(
                "index {bad} out of {rows} rows"
            )));
        }
        let mut out_shape = n.shape.clone();
        out_shape[0] = indices.len();
        let mut data = vec![F::zero(); indices.len() * inner];
        for (r, &i) in indices.iter().enumerate() {
            data[r * inner..(r + 1) * inner].copy_from_slice(&n.data[i * inner..(i + 1) * inner]);
        }
        let tracked = n.requires_grad;
        drop(n);
        Ok(Self::from_op(
            data,
            out_shape,
            Parents::IndexSelect(self.clone(), indices.to_vec()),
            tracked,
        ))
    }

    // ── backward ──────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss. Accumulates gradients into
    /// every reachable `requires_grad` tensor.
    pub fn backward(&self) -> Result<()> {
        {
            let n = self.0.borrow();
            if n.data.len() != 1 {
                return Err(NumericError::NonScalarLoss { shape: n.shape.clone() });
            }
        }
        let order = topo_order(self);
        accumulate(self, &[F::one()]);
        for t in order.iter().rev() {
            let node = t.0.borrow();
            let Some(g) = node.grad.clone() else { continue };
            let out_data = &node.data;
            match &node.parents {
                Parents::Leaf => {}
                Parents::Add(a, b) => {
                    accumulate(a, &g);
                    accumulate(b, &g);
                }
                Parents::Sub(a, b) => {
                    let neg: Vec<F> = g.iter().map(|&x| -x).collect();
                    accumulate(a, &g);
                    accumulate(b, &neg);
                }
                Parents::Mul(a, b) => {
                    let da: Vec<F> =
                        g.iter().zip(b.values().iter()).map(|(&gi, &bi)| gi * bi).collect();
                    let db: Vec<F> =
                        g.iter().zip(a.values().iter()).map(|(&gi, &ai)| gi * ai).collect();
                    accumulate(a, &da);
                    accumulate(b, &db);
                }
                Parents::AddBroadcast(a, b) => {
                    accumulate(a, &g);
                    let bn = b.numel();
                    let mut db = vec![F::zero(); bn];
                    for (i, &gi) in g.iter().enumerate() {
                        db[i % bn] += gi;
                    }
                    accumulate(b, &db);
                }
                Parents::MulBroadcast(a, b) => {
                    let bn = b.numel();
                    let brow = b.to_vec();
                    let da: Vec<F> =
                        g.iter().enumerate().map(|(i, &gi)| gi * brow[i % bn]).collect();
                    let mut db = vec![F::zero(); bn];
                    for (i, (&gi, &ai)) in g.iter().zip(a.values().iter()).enumerate() {
                        db[i % bn] += gi * ai;
                    }
                    accumulate(a, &da);
                    accumulate(b, &db);
                }
                Parents::Scale(a, c) => {
                    let da: Vec<F> = g.iter().map(|&x| x * *c).collect();
                    accumulate(a, &da);
                }
                Parents::AddScalar(a) => accumulate(a, &g),
                Parents::MatMul(a, b) => {
                    let (m, k) = {
                        let s = a.shape();
                        (s[0], s[1])
                    };
                    let n_cols = b.shape()[1];
                    let da = matmul_nt(&g, &b.values(), m, n_cols, k);
                    let db = matmul_tn(&a.values(), &g, m, k, n_cols);
                    accumulate(a, &da);
                    accumulate(b, &db);
                }
                Parents::Relu(a) => {
                    let da: Vec<F> = g
                        .iter()
                        .zip(a.values().iter())
                        .map(|(&gi, &xi)| if xi > F::zero() { gi } else { F::zero() })
                        .collect();
                    accumulate(a, &da);
                }
                Parents::Softmax(a, _mask) => {
                    // dx_j = y_j * (g_j - sum_i g_i y_i); masked positions have y=0.
                    let cols = *node.shape.last().unwrap();
                    let rows = out_data.len() / cols;
                    let mut da = vec![F::zero(); out_data.len()];
                    for r in 0..rows {
                        let y = &out_data[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: F = y.iter().zip(gr).map(|(&yi, &gi)| yi * gi).sum();
                        for j in 0..cols {
                            da[r * cols + j] = y[j] * (gr[j] - dot);
                        }
                    }
                    accumulate(a, &da);
                }
                Parents::LogSoftmax(a) => {
                    let cols = *node.shape.last().unwrap();
                    let rows = out_data.len() / cols;
                    let mut da = vec![F::zero(); out_data.len()];
                    for r in 0..rows {
                        let y = &out_data[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let gsum: F = gr.iter().cloned().sum();
                        for j in 0..cols {
                            da[r * cols + j] = gr[j] - y[j].exp() * gsum;
                        }
                    }
                    accumulate(a, &da);
                }
                Parents::LayerNorm(a, eps) => {
                    let cols = *node.shape.last().unwrap();
                    let rows = out_data.len() / cols;
                    let inv = F::one() / F::from_f64(cols as f64);
                    let src = a.values();
                    let mut da = vec![F::zero(); out_data.len()];
                    for r in 0..rows {
                        let x = &src[r * cols..(r + 1) * cols];
                        let y = &out_data[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let mean = x.iter().cloned().sum::<F>() * inv;
                        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() * inv;
                        let rstd = F::one() / (var + *eps).sqrt();
                        let gmean = gr.iter().cloned().sum::<F>() * inv;
                        let gydot = gr.iter().zip(y).map(|(&gi, &yi)| gi * yi).sum::<F>() * inv;
                        for j in 0..cols {
                            da[r * cols + j] = rstd * (gr[j] - gmean - y[j] * gydot);
                        }
                    }
                    drop(src);
                    accumulate(a, &da);
                }
                Parents::Dropout(a, mask) => {
                    let da: Vec<F> = g.iter().zip(mask).map(|(&gi, &mi)| gi * mi).collect();
                    accumulate(a, &da);
                }
                Parents::SumAxis(a, axis) => {
                    let src_shape = a.shape();
                    let (outer, len, inner) = axis_split(&src_shape, *axis);
                    let mut da = vec![F::zero(); a.numel()];
                    for o in 0..outer {
                        for ax in 0..len {
                            let dst = (o * len + ax) * inner;
                            let srcg = o * inner;
                            for i in 0..inner {
                                da[dst + i] = g[srcg + i];
                            }
                        }
                    }
                    accumulate(a, &da);
                }
                Parents::SumAll(a) => {
                    let da = vec![g[0]; a.numel()];
                    accumulate(a, &da);
                }
                Parents::Reshape(a) => accumulate(a, &g),
                Parents::Permute(a, perm) => {
                    let inv = inverse_perm(perm);
                    let da = permute_data(&g, &node.shape, &inv, &a.shape());
                    accumulate(a, &da);
                }
                Parents::Concat(parts, axis) => {
                    let (outer, total, inner) = axis_split(&node.shape, *axis);
                    let mut offset = 0;
                    for p in parts {
                        let len = p.shape()[*axis];
                        let mut dp = vec![F::zero(); p.numel()];
                        for o in 0..outer {
                            for a in 0..len {
                                let si = (o * total + offset + a) * inner;
                                let di = (o * len + a) * inner;
                                dp[di..di + inner].copy_from_slice(&g[si..si + inner]);
                            }
                        }
                        offset += len;
                        accumulate(p, &dp);
                    }
                }
                Parents::Narrow(a, axis, start, len) => {
                    let src_shape = a.shape();
                    let (outer, full, inner) = axis_split(&src_shape, *axis);
                    let mut da = vec![F::zero(); a.numel()];
                    for o in 0..outer {
                        for ax in 0..*len {
                            let di = (o * full + start + ax) * inner;
                            let si = (o * len + ax) * inner;
                            da[di..di + inner].copy_from_slice(&g[si..si + inner]);
                        }
                    }
                    accumulate(a, &da);
                }
                Parents::IndexSelect(a, indices) => {
                    let inner = if indices.is_empty() { 0 } else { g.len() / indices.len() };
                    let mut da = vec![F::zero(); a.numel()];
                    for (r, &i) in indices.iter().enumerate() {
                        for c in 0..inner {
                            da[i * inner + c] += g[r * inner + c];
                        }
                    }
                    accumulate(a, &da);
                }
            }
        }
        Ok(())
    }
}

fn accumulate<F: Scalar>(t: &Tensor<F>, delta: &[F]) {
    let mut n = t.0.borrow_mut();
    if !n.requires_grad {
        return;
    }
    match &mut n.grad {
        Some(g) => {
            for (gi, &di) in g.iter_mut().zip(delta) {
                *gi += di;
            }
        }
        None => n.grad = Some(delta.to_vec()),
    }
}

/// Deterministic post-order over the graph reachable from `root`,
/// restricted to tensors that participate in differentiation.
fn topo_order<F: Scalar>(root: &Tensor<F>) -> Vec<Tensor<F>> {
    let mut order = Vec::new();
    let mut visited = std::collections::HashSet::new();
    // Iterative DFS: (tensor, children_pushed).
    let mut stack = vec![(root.clone(), false)];
    while let Some((t, expanded)) = stack.pop() {
        if expanded {
            order.push(t);
            continue;
        }
        if !visited.insert(t.ptr()) {
            continue;
        }
        stack.push((t.clone(), true));
        let node = t.0.borrow();
        let mut push = |x: &Tensor<F>| {
            if x.requires_grad() {
                stack.push((x.clone(), false));
            }
        };
        match &node.parents {
            Parents::Leaf => {}
            Parents::Add(a, b)
            | Parents::Sub(a, b)
            | Parents::Mul(a, b)
            | Parents::AddBroadcast(a, b)
            | Parents::MulBroadcast(a, b)
            | Parents::MatMul(a, b) => {
                push(a);
                push(b);
            }
            Parents::Scale(a, _)
            | Parents::AddScalar(a)
            | Parents::Relu(a)
            | Parents::Softmax(a, _)
            | Parents::LogSoftmax(a)
            | Parents::LayerNorm(a, _)
            | Parents::Dropout(a, _)
            | Parents::SumAxis(a, _)
            | Parents::SumAll(a)
            | Parents::Reshape(a)
            | Parents::Permute(a, _)
            | Parents::Narrow(a, _, _, _)
            | Parents::IndexSelect(a, _) => push(a),
            Parents::Concat(parts, _) => parts.iter().for_each(&mut push),
        }
    }
    order
}

/// Splits `shape` at `axis` into (product before, extent, product after).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn permute_data<F: Scalar>(
    data: &[F],
    shape: &[usize],
    perm: &[usize],
    out_shape: &[usize],
) -> Vec<F> {
    let rank = shape.len();
    if rank == 0 {
        return data.to_vec();
    }
    let mut src_strides = vec![1usize; rank];
    for i in (0..rank - 1).rev() {
        src_strides[i] = src_strides[i + 1] * shape[i + 1];
    }
    let out_strides_src: Vec<usize> = perm.iter().map(|&p| src_strides[p]).collect();
    let mut out = vec![F::zero(); data.len()];
    let mut idx = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src = 0;
        for d in 0..rank {
            src += idx[d] * out_strides_src[d];
        }
        *slot = data[src];
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// `C[m,n] = A[m,k] B[k,n]`.
pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `C[m,k] = G[m,n] B[k,n]^T`.
fn matmul_nt<F: Scalar>(g: &[F], b: &[F], m: usize, n: usize, k: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = F::zero();
            for (gv, bv) in grow.iter().zip(brow) {
                s += *gv * *bv;
            }
            c[i * k + p] = s;
        }
    }
    c
}

/// `C[k,n] = A[m,k]^T G[m,n]`.
fn matmul_tn<F: Scalar>(a: &[F], g: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow) {
                *cv += av * gv;
            }
        }
    }
    c
}
