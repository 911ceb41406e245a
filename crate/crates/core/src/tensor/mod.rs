//! Reverse-mode tensor tape.
//!
//! Every forward primitive appends a node holding the result buffer and the
//! ids of its inputs; [`Tape::backward`] walks the nodes in reverse creation
//! order (a valid topological order by construction) and accumulates
//! gradients with a fixed sequential reduction, so gradients are
//! bitwise-reproducible. A tape belongs to one logical thread; independent
//! tapes over disjoint data may run concurrently.
//!
//! Broadcasting is deliberately limited to trailing-dimension vectors
//! ([`Tape::add_row_vec`], [`Tape::mul_row_vec`]); every other operand pair
//! must match shapes exactly.

pub mod kernels;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::element::Element;
use crate::error::{Error, Result};
use kernels::ConvDims;

/// Handle to a tensor living on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(u32);

impl TensorId {
    #[inline]
    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Scale(TensorId),
    AddRowVec(TensorId, TensorId),
    MulRowVec(TensorId, TensorId),
    Matmul(TensorId, TensorId),
    MatmulTb(TensorId, TensorId),
    Reshape(TensorId),
    ConcatRows(Vec<TensorId>),
    SliceRows { src: TensorId, start: usize },
    Conv2d { x: TensorId, w: TensorId, bias: Option<TensorId>, stride: usize, padding: usize },
    ConvTranspose2d { x: TensorId, w: TensorId, bias: Option<TensorId>, stride: usize, padding: usize },
    Attention { q: TensorId, k: TensorId, v: TensorId, heads: usize, causal: bool },
    LayerNorm { x: TensorId, gamma: TensorId, beta: TensorId, eps: f64 },
    Softmax(TensorId),
    Gelu(TensorId),
    Relu(TensorId),
    Softplus(TensorId),
    Ln(TensorId),
    Sqrt(TensorId),
    Sum(TensorId),
    BilinearResize(TensorId),
    TokensToGrid(TensorId),
    GridToTokens(TensorId),
}

struct Node<E> {
    shape: Vec<usize>,
    data: Arc<Vec<E>>,
    op: Op,
    scale: E, // only used by Op::Scale
    needs_grad: bool,
}

/// The recording tape. Create one per forward pass.
pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
    grads: Vec<Option<Vec<E>>>,
    grad_enabled: bool,
    check_finite: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    /// A tape that records gradients for leaves with `requires_grad`.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            grad_enabled: true,
            check_finite: cfg!(debug_assertions),
        }
    }

    /// A tape that never records gradients (inference).
    pub fn inference() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    /// Validate that every forward output is finite (on by default in debug
    /// builds; the gradient checker switches it on explicitly).
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, t: TensorId) -> &[usize] {
        &self.nodes[t.idx()].shape
    }

    pub fn data(&self, t: TensorId) -> &[E] {
        &self.nodes[t.idx()].data
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, t: TensorId) -> E {
        debug_assert_eq!(numel(self.shape(t)), 1);
        self.nodes[t.idx()].data[0]
    }

    /// Gradient of `t` from the most recent [`Tape::backward`] call. `None`
    /// for tensors that did not require gradients.
    pub fn grad(&self, t: TensorId) -> Option<&[E]> {
        self.grads.get(t.idx()).and_then(|g| g.as_deref())
    }

    /// Move a gradient buffer out of the tape (the training step hands
    /// gradients to the optimizer after dropping the tape).
    pub fn take_grad(&mut self, t: TensorId) -> Option<Vec<E>> {
        self.grads.get_mut(t.idx()).and_then(|g| g.take())
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    /// Insert a leaf sharing `data` (no copy). Frozen parameters enter with
    /// `requires_grad == false` and therefore never receive a gradient.
    pub fn leaf(&mut self, shape: &[usize], data: Arc<Vec<E>>, requires_grad: bool) -> Result<TensorId> {
        if numel(shape) != data.len() {
            return Err(Error::dim(
                "leaf",
                format!("shape {:?} does not match {} elements", shape, data.len()),
            ));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad && self.grad_enabled))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<E>) -> Result<TensorId> {
        self.leaf(shape, Arc::new(data), false)
    }

    pub fn scalar(&mut self, v: E) -> TensorId {
        self.push(vec![1], Arc::new(vec![v]), Op::Leaf, false)
    }

    fn push(&mut self, shape: Vec<usize>, data: Arc<Vec<E>>, op: Op, needs_grad: bool) -> TensorId {
        let id = TensorId(self.nodes.len() as u32);
        self.nodes.push(Node {
            shape,
            data,
            op,
            scale: E::zero(),
            needs_grad,
        });
        id
    }

    fn needs(&self, t: TensorId) -> bool {
        self.nodes[t.idx()].needs_grad
    }

    fn emit(&mut self, shape: Vec<usize>, data: Vec<E>, op: Op, needs_grad: bool) -> Result<TensorId> {
        if self.check_finite {
            for &v in &data {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("{:?}", op_name(&op))));
                }
            }
        }
        Ok(self.push(shape, Arc::new(data), op, needs_grad && self.grad_enabled))
    }

    // ── Elementwise and broadcast ops ───────────────────────────────────

    fn same_shape(&self, op: &'static str, a: TensorId, b: TensorId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x + y);
        self.emit(self.shape(a).to_vec(), data, Op::Add(a, b), self.needs(a) || self.needs(b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("sub", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x - y);
        self.emit(self.shape(a).to_vec(), data, Op::Sub(a, b), self.needs(a) || self.needs(b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.same_shape("mul", a, b)?;
        let data = zip_map(self.data(a), self.data(b), |x, y| x * y);
        self.emit(self.shape(a).to_vec(), data, Op::Mul(a, b), self.needs(a) || self.needs(b))
    }

    pub fn scale(&mut self, a: TensorId, c: E) -> Result<TensorId> {
        let data = self.data(a).iter().map(|&x| x * c).collect();
        let id = self.emit(self.shape(a).to_vec(), data, Op::Scale(a), self.needs(a))?;
        self.nodes[id.idx()].scale = c;
        Ok(id)
    }

    fn row_vec_check(&self, op: &'static str, m: TensorId, v: TensorId) -> Result<usize> {
        let ms = self.shape(m);
        let vs = self.shape(v);
        let d = *ms.last().ok_or_else(|| Error::dim(op, "rank-0 operand"))?;
        if vs.len() != 1 || vs[0] != d {
            return Err(Error::dim(
                op,
                format!("vector {:?} does not match trailing dim of {:?}", vs, ms),
            ));
        }
        Ok(d)
    }

    /// `m + v` with `v` broadcast over the trailing dimension (bias add).
    pub fn add_row_vec(&mut self, m: TensorId, v: TensorId) -> Result<TensorId> {
        let d = self.row_vec_check("add_row_vec", m, v)?;
        let vd = self.data(v);
        let data = self
            .data(m)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vd[i % d])
            .collect();
        self.emit(self.shape(m).to_vec(), data, Op::AddRowVec(m, v), self.needs(m) || self.needs(v))
    }

    /// `m ⊙ v` with `v` broadcast over the trailing dimension (FiLM scale).
    pub fn mul_row_vec(&mut self, m: TensorId, v: TensorId) -> Result<TensorId> {
        let d = self.row_vec_check("mul_row_vec", m, v)?;
        let vd = self.data(v);
        let data = self
            .data(m)
            .iter()
            .enumerate()
            .map(|(i, &x)| x * vd[i % d])
            .collect();
        self.emit(self.shape(m).to_vec(), data, Op::MulRowVec(m, v), self.needs(m) || self.needs(v))
    }

    // ── Matrix products ─────────────────────────────────────────────────

    fn mat_dims(&self, op: &'static str, t: TensorId) -> Result<(usize, usize)> {
        let s = self.shape(t);
        if s.len() != 2 {
            return Err(Error::dim(op, format!("expected rank 2, got {:?}", s)));
        }
        Ok((s[0], s[1]))
    }

    /// `a[m×k] · b[k×n]`
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.mat_dims("matmul", a)?;
        let (kb, n) = self.mat_dims("matmul", b)?;
        if ka != kb {
            return Err(Error::dim("matmul", format!("inner dims {} vs {}", ka, kb)));
        }
        let mut out = vec![E::zero(); m * n];
        kernels::matmul_nn(self.data(a), self.data(b), m, ka, n, &mut out);
        self.emit(vec![m, n], out, Op::Matmul(a, b), self.needs(a) || self.needs(b))
    }

    /// `a[m×k] · b[n×k]ᵀ` — the layout used by linear layers (`w` stored
    /// `[out×in]`) and attention score matrices.
    pub fn matmul_tb(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, ka) = self.mat_dims("matmul_tb", a)?;
        let (n, kb) = self.mat_dims("matmul_tb", b)?;
        if ka != kb {
            return Err(Error::dim("matmul_tb", format!("inner dims {} vs {}", ka, kb)));
        }
        let mut out = vec![E::zero(); m * n];
        kernels::matmul_nt(self.data(a), self.data(b), m, ka, n, &mut out);
        self.emit(vec![m, n], out, Op::MatmulTb(a, b), self.needs(a) || self.needs(b))
    }

    // ── Shape ops ───────────────────────────────────────────────────────

    pub fn reshape(&mut self, a: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel(shape) != numel(self.shape(a)) {
            return Err(Error::dim(
                "reshape",
                format!("{:?} -> {:?}", self.shape(a), shape),
            ));
        }
        let data = Arc::clone(&self.nodes[a.idx()].data);
        let needs = self.needs(a);
        Ok(self.push(shape.to_vec(), data, Op::Reshape(a), needs))
    }

    /// Concatenate along the first axis; trailing dims must agree.
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        let first = *parts.first().ok_or(Error::dim("concat_rows", "no inputs"))?;
        let tail = self.shape(first)[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        let mut needs = false;
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(Error::dim(
                    "concat_rows",
                    format!("trailing dims {:?} vs {:?}", &s[1..], tail),
                ));
            }
            rows += s[0];
            data.extend_from_slice(self.data(p));
            needs |= self.needs(p);
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        self.emit(shape, data, Op::ConcatRows(parts.to_vec()), needs)
    }

    /// Rows `[start, start+len)` along the first axis.
    pub fn slice_rows(&mut self, src: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let s = self.shape(src);
        if s.is_empty() || start + len > s[0] {
            return Err(Error::dim(
                "slice_rows",
                format!("rows [{start}, {}) of {:?}", start + len, s),
            ));
        }
        let rs: usize = s[1..].iter().product();
        let data = self.data(src)[start * rs..(start + len) * rs].to_vec();
        let mut shape = vec![len];
        shape.extend_from_slice(&s[1..]);
        let needs = self.needs(src);
        self.emit(shape, data, Op::SliceRows { src, start }, needs)
    }

    // ── Convolutions ────────────────────────────────────────────────────

    fn conv_dims(
        &self,
        op: &'static str,
        x: TensorId,
        w: TensorId,
        stride: usize,
        padding: usize,
        transposed: bool,
    ) -> Result<ConvDims> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 3 || ws.len() != 4 || ws[2] != ws[3] {
            return Err(Error::dim(op, format!("x {:?}, w {:?}", xs, ws)));
        }
        if stride == 0 {
            return Err(Error::dim(op, "stride must be positive"));
        }
        let k = ws[2];
        let (h, w_in) = (xs[1], xs[2]);
        if !transposed {
            // x: [c_in×h×w], w: [c_out×c_in×k×k]
            if ws[1] != xs[0] {
                return Err(Error::dim(op, format!("channels {} vs {}", ws[1], xs[0])));
            }
            if h + 2 * padding < k || w_in + 2 * padding < k {
                return Err(Error::dim(op, "kernel larger than padded input"));
            }
            Ok(ConvDims {
                c_in: xs[0],
                c_out: ws[0],
                h,
                w: w_in,
                k,
                stride,
                padding,
                oh: (h + 2 * padding - k) / stride + 1,
                ow: (w_in + 2 * padding - k) / stride + 1,
            })
        } else {
            // x: [c_in×h×w], w: [c_in×c_out×k×k]
            if ws[0] != xs[0] {
                return Err(Error::dim(op, format!("channels {} vs {}", ws[0], xs[0])));
            }
            let oh = ((h - 1) * stride + k) as i64 - 2 * padding as i64;
            let ow = ((w_in - 1) * stride + k) as i64 - 2 * padding as i64;
            if oh <= 0 || ow <= 0 {
                return Err(Error::dim(op, "non-positive output size"));
            }
            Ok(ConvDims {
                c_in: xs[0],
                c_out: ws[1],
                h,
                w: w_in,
                k,
                stride,
                padding,
                oh: oh as usize,
                ow: ow as usize,
            })
        }
    }

    fn bias_check(&self, op: &'static str, bias: Option<TensorId>, c_out: usize) -> Result<()> {
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs != [c_out] {
                return Err(Error::dim(op, format!("bias {:?} for {} channels", bs, c_out)));
            }
        }
        Ok(())
    }

    /// `conv2d(x[c_in×h×w], w[c_out×c_in×k×k]) -> [c_out×h'×w']` with
    /// `h' = ⌊(h + 2p − k)/s⌋ + 1`.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        w: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        let d = self.conv_dims("conv2d", x, w, stride, padding, false)?;
        self.bias_check("conv2d", bias, d.c_out)?;
        let mut out = vec![E::zero(); d.c_out * d.oh * d.ow];
        kernels::conv2d(self.data(x), self.data(w), &d, &mut out);
        if let Some(b) = bias {
            add_channel_bias(&mut out, self.data(b), d.c_out, d.oh * d.ow);
        }
        let needs = self.needs(x) || self.needs(w) || bias.is_some_and(|b| self.needs(b));
        self.emit(
            vec![d.c_out, d.oh, d.ow],
            out,
            Op::Conv2d { x, w, bias, stride, padding },
            needs,
        )
    }

    /// `conv_transpose2d(x[c_in×h×w], w[c_in×c_out×k×k]) -> [c_out×h'×w']`
    /// with `h' = (h−1)·s − 2p + k`; the adjoint of [`Tape::conv2d`].
    pub fn conv_transpose2d(
        &mut self,
        x: TensorId,
        w: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        padding: usize,
    ) -> Result<TensorId> {
        let d = self.conv_dims("conv_transpose2d", x, w, stride, padding, true)?;
        self.bias_check("conv_transpose2d", bias, d.c_out)?;
        let mut out = vec![E::zero(); d.c_out * d.oh * d.ow];
        kernels::conv_transpose2d(self.data(x), self.data(w), &d, &mut out);
        if let Some(b) = bias {
            add_channel_bias(&mut out, self.data(b), d.c_out, d.oh * d.ow);
        }
        let needs = self.needs(x) || self.needs(w) || bias.is_some_and(|b| self.needs(b));
        self.emit(
            vec![d.c_out, d.oh, d.ow],
            out,
            Op::ConvTranspose2d { x, w, bias, stride, padding },
            needs,
        )
    }

    // ── Attention / normalization ───────────────────────────────────────

    /// Multi-head scaled dot-product attention; q/k/v are `[n×width]` and the
    /// head dimension is `width/heads`.
    pub fn attention(
        &mut self,
        q: TensorId,
        k: TensorId,
        v: TensorId,
        heads: usize,
        causal: bool,
    ) -> Result<TensorId> {
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let (n, width) = self.mat_dims("attention", q)?;
        if heads == 0 || width % heads != 0 {
            return Err(Error::dim(
                "attention",
                format!("width {} not divisible by {} heads", width, heads),
            ));
        }
        let mut out = vec![E::zero(); n * width];
        kernels::attention(self.data(q), self.data(k), self.data(v), n, width, heads, causal, &mut out);
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        self.emit(vec![n, width], out, Op::Attention { q, k, v, heads, causal }, needs)
    }

    /// Per-row layer normalization over the trailing dimension, then affine.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let d = self.row_vec_check("layer_norm", x, gamma)?;
        let db = self.row_vec_check("layer_norm", x, beta)?;
        debug_assert_eq!(d, db);
        let rows = numel(self.shape(x)) / d;
        let mut out = vec![E::zero(); rows * d];
        kernels::layer_norm_rows(self.data(x), self.data(gamma), self.data(beta), rows, d, eps, &mut out);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.emit(self.shape(x).to_vec(), out, Op::LayerNorm { x, gamma, beta, eps }, needs)
    }

    /// Softmax over the trailing axis, computed with max subtraction.
    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId> {
        let s = self.shape(x);
        let d = *s.last().ok_or_else(|| Error::dim("softmax", "rank-0 operand"))?;
        let rows = numel(s) / d;
        let mut out = vec![E::zero(); rows * d];
        kernels::softmax_rows(self.data(x), rows, d, false, &mut out);
        let needs = self.needs(x);
        self.emit(s.to_vec(), out, Op::Softmax(x), needs)
    }

    // ── Pointwise nonlinearities ────────────────────────────────────────

    pub fn gelu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Gelu(x), kernels::gelu)
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Relu(x), |v| if v > E::zero() { v } else { E::zero() })
    }

    /// `softplus(x) = ln(1 + eˣ)`, strictly positive, overflow-free.
    pub fn softplus(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Softplus(x), kernels::softplus)
    }

    pub fn ln(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Ln(x), |v| v.ln())
    }

    pub fn sqrt(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary(x, Op::Sqrt(x), |v| v.sqrt())
    }

    fn unary(&mut self, x: TensorId, op: Op, f: impl Fn(E) -> E) -> Result<TensorId> {
        let data = self.data(x).iter().map(|&v| f(v)).collect();
        let needs = self.needs(x);
        self.emit(self.shape(x).to_vec(), data, op, needs)
    }

    // ── Reductions ──────────────────────────────────────────────────────

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let mut acc = E::zero();
        for &v in self.data(x) {
            acc = acc + v;
        }
        let needs = self.needs(x);
        self.emit(vec![1], vec![acc], Op::Sum(x), needs)
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: TensorId) -> Result<TensorId> {
        let n = numel(self.shape(x));
        let s = self.sum(x)?;
        self.scale(s, E::from_f64(1.0 / n as f64))
    }

    // ── Resampling / layout ─────────────────────────────────────────────

    /// Bilinear resize of `[c×h×w]` to `[c×th×tw]` (align-corners=false).
    /// Resizing to the source size reproduces the input bitwise.
    pub fn bilinear_resize(&mut self, x: TensorId, th: usize, tw: usize) -> Result<TensorId> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::dim("bilinear_resize", format!("expected rank 3, got {:?}", s)));
        }
        if th == 0 || tw == 0 {
            return Err(Error::dim("bilinear_resize", "target size must be positive"));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        if (th, tw) == (h, w) {
            let data = Arc::clone(&self.nodes[x.idx()].data);
            let needs = self.needs(x);
            return Ok(self.push(s.to_vec(), data, Op::Reshape(x), needs));
        }
        let mut out = vec![E::zero(); c * th * tw];
        kernels::bilinear_resize(self.data(x), c, h, w, th, tw, &mut out);
        let needs = self.needs(x);
        self.emit(vec![c, th, tw], out, Op::BilinearResize(x), needs)
    }

    /// `[g²×c]` token matrix (row-major over the g×g grid) to a `[c×g×g]`
    /// feature map.
    pub fn tokens_to_grid(&mut self, x: TensorId, g: usize) -> Result<TensorId> {
        let (n, c) = self.mat_dims("tokens_to_grid", x)?;
        if n != g * g {
            return Err(Error::dim("tokens_to_grid", format!("{} tokens, grid {}²", n, g)));
        }
        let xd = self.data(x);
        let mut out = vec![E::zero(); c * n];
        for t in 0..n {
            for ch in 0..c {
                out[ch * n + t] = xd[t * c + ch];
            }
        }
        let needs = self.needs(x);
        self.emit(vec![c, g, g], out, Op::TokensToGrid(x), needs)
    }

    /// `[c×h×w]` feature map to a `[hw×c]` token matrix.
    pub fn grid_to_tokens(&mut self, x: TensorId) -> Result<TensorId> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::dim("grid_to_tokens", format!("expected rank 3, got {:?}", s)));
        }
        let (c, n) = (s[0], s[1] * s[2]);
        let xd = self.data(x);
        let mut out = vec![E::zero(); c * n];
        for ch in 0..c {
            for t in 0..n {
                out[t * c + ch] = xd[ch * n + t];
            }
        }
        let needs = self.needs(x);
        self.emit(vec![n, c], out, Op::GridToTokens(x), needs)
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root. Gradients of all `requires_grad`
    /// leaves become available through [`Tape::grad`]; intermediate gradient
    /// buffers are freed as soon as they have been consumed.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if numel(self.shape(root)) != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        if !self.grad_enabled {
            return Err(Error::Contract("backward on an inference tape".into()));
        }
        let mut grads: Vec<Option<Vec<E>>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        if self.nodes[root.idx()].needs_grad {
            grads[root.idx()] = Some(vec![E::one()]);
        }
        for i in (0..=root.idx()).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.step_backward(i, &g, &mut grads)?;
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<E>>], t: TensorId, f: impl FnOnce(&mut [E])) {
        if !self.needs(t) {
            return;
        }
        let buf = grads[t.idx()].get_or_insert_with(|| vec![E::zero(); self.data(t).len()]);
        f(buf);
    }

    fn step_backward(&self, i: usize, g: &[E], grads: &mut [Option<Vec<E>>]) -> Result<()> {
        let node = &self.nodes[i];
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, a, |buf| add_into(buf, g));
                self.accumulate(grads, b, |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, |buf| add_into(buf, g));
                self.accumulate(grads, b, |buf| sub_into(buf, g));
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(a), self.data(b));
                self.accumulate(grads, a, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * bd[j];
                    }
                });
                self.accumulate(grads, b, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * ad[j];
                    }
                });
            }
            Op::Scale(a) => {
                let c = node.scale;
                self.accumulate(grads, a, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * c;
                    }
                });
            }
            Op::AddRowVec(m, v) => {
                let d = self.data(v).len();
                self.accumulate(grads, m, |buf| add_into(buf, g));
                self.accumulate(grads, v, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j % d] = buf[j % d] + *gv;
                    }
                });
            }
            Op::MulRowVec(m, v) => {
                let d = self.data(v).len();
                let (md, vd) = (self.data(m), self.data(v));
                self.accumulate(grads, m, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * vd[j % d];
                    }
                });
                self.accumulate(grads, v, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j % d] = buf[j % d] + *gv * md[j];
                    }
                });
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                // dA = dC·Bᵀ ; dB = Aᵀ·dC
                self.accumulate(grads, a, |buf| {
                    kernels::matmul_nt(g, self.data(b), m, n, k, buf);
                });
                self.accumulate(grads, b, |buf| {
                    kernels::matmul_tn(self.data(a), g, k, m, n, buf);
                });
            }
            Op::MatmulTb(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[0];
                // C = A·Bᵀ: dA = dC·B ; dB = dCᵀ·A
                self.accumulate(grads, a, |buf| {
                    kernels::matmul_nn(g, self.data(b), m, n, k, buf);
                });
                self.accumulate(grads, b, |buf| {
                    kernels::matmul_tn(g, self.data(a), n, m, k, buf);
                });
            }
            Op::Reshape(a) => {
                self.accumulate(grads, a, |buf| add_into(buf, g));
            }
            Op::ConcatRows(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.data(p).len();
                    self.accumulate(grads, p, |buf| add_into(buf, &g[off..off + len]));
                    off += len;
                }
            }
            Op::SliceRows { src, start } => {
                let rs: usize = self.shape(src)[1..].iter().product();
                let off = start * rs;
                self.accumulate(grads, src, |buf| add_into(&mut buf[off..off + g.len()], g));
            }
            Op::Conv2d { x, w, bias, stride, padding } => {
                let d = self
                    .conv_dims("conv2d", x, w, stride, padding, false)
                    .expect("dims validated in forward");
                self.accumulate(grads, x, |buf| {
                    kernels::conv2d_backward(self.data(x), self.data(w), g, &d, Some(buf), None);
                });
                self.accumulate(grads, w, |buf| {
                    kernels::conv2d_backward(self.data(x), self.data(w), g, &d, None, Some(buf));
                });
                if let Some(b) = bias {
                    self.accumulate(grads, b, |buf| {
                        channel_bias_grad(buf, g, d.c_out, d.oh * d.ow);
                    });
                }
            }
            Op::ConvTranspose2d { x, w, bias, stride, padding } => {
                let d = self
                    .conv_dims("conv_transpose2d", x, w, stride, padding, true)
                    .expect("dims validated in forward");
                self.accumulate(grads, x, |buf| {
                    kernels::conv_transpose2d_backward(self.data(x), self.data(w), g, &d, Some(buf), None);
                });
                self.accumulate(grads, w, |buf| {
                    kernels::conv_transpose2d_backward(self.data(x), self.data(w), g, &d, None, Some(buf));
                });
                if let Some(b) = bias {
                    self.accumulate(grads, b, |buf| {
                        channel_bias_grad(buf, g, d.c_out, d.oh * d.ow);
                    });
                }
            }
            Op::Attention { q, k, v, heads, causal } => {
                let (n, width) = (self.shape(q)[0], self.shape(q)[1]);
                let mut dq = vec![E::zero(); n * width];
                let mut dk = vec![E::zero(); n * width];
                let mut dv = vec![E::zero(); n * width];
                kernels::attention_backward(
                    self.data(q), self.data(k), self.data(v), g, n, width, heads, causal,
                    &mut dq, &mut dk, &mut dv,
                );
                self.accumulate(grads, q, |buf| add_into(buf, &dq));
                self.accumulate(grads, k, |buf| add_into(buf, &dk));
                self.accumulate(grads, v, |buf| add_into(buf, &dv));
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let d = self.data(gamma).len();
                let rows = self.data(x).len() / d;
                self.accumulate(grads, x, |buf| {
                    kernels::layer_norm_backward_rows(
                        self.data(x), self.data(gamma), g, rows, d, eps, Some(buf), None, None,
                    );
                });
                self.accumulate(grads, gamma, |buf| {
                    kernels::layer_norm_backward_rows(
                        self.data(x), self.data(gamma), g, rows, d, eps, None, Some(buf), None,
                    );
                });
                self.accumulate(grads, beta, |buf| {
                    kernels::layer_norm_backward_rows(
                        self.data(x), self.data(gamma), g, rows, d, eps, None, None, Some(buf),
                    );
                });
            }
            Op::Softmax(x) => {
                let d = *self.shape(i_id(i)).last().unwrap();
                let rows = self.data(x).len() / d;
                let y = self.data(i_id(i));
                self.accumulate(grads, x, |buf| {
                    kernels::softmax_backward_rows(y, g, rows, d, buf);
                });
            }
            Op::Gelu(x) => {
                let xd = self.data(x);
                self.accumulate(grads, x, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * kernels::gelu_grad(xd[j]);
                    }
                });
            }
            Op::Relu(x) => {
                let xd = self.data(x);
                self.accumulate(grads, x, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        if xd[j] > E::zero() {
                            buf[j] = buf[j] + *gv;
                        }
                    }
                });
            }
            Op::Softplus(x) => {
                let xd = self.data(x);
                self.accumulate(grads, x, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * kernels::sigmoid(xd[j]);
                    }
                });
            }
            Op::Ln(x) => {
                let xd = self.data(x);
                self.accumulate(grads, x, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv / xd[j];
                    }
                });
            }
            Op::Sqrt(x) => {
                let y = self.data(i_id(i));
                let half = E::from_f64(0.5);
                self.accumulate(grads, x, |buf| {
                    for (j, gv) in g.iter().enumerate() {
                        buf[j] = buf[j] + *gv * half / y[j];
                    }
                });
            }
            Op::Sum(x) => {
                let gv = g[0];
                self.accumulate(grads, x, |buf| {
                    for b in buf.iter_mut() {
                        *b = *b + gv;
                    }
                });
            }
            Op::BilinearResize(x) => {
                let s = self.shape(x);
                let os = self.shape(i_id(i));
                self.accumulate(grads, x, |buf| {
                    kernels::bilinear_resize_backward(g, s[0], s[1], s[2], os[1], os[2], buf);
                });
            }
            Op::TokensToGrid(x) => {
                let (n, c) = (self.shape(x)[0], self.shape(x)[1]);
                self.accumulate(grads, x, |buf| {
                    for t in 0..n {
                        for ch in 0..c {
                            buf[t * c + ch] = buf[t * c + ch] + g[ch * n + t];
                        }
                    }
                });
            }
            Op::GridToTokens(x) => {
                let s = self.shape(x);
                let (c, n) = (s[0], s[1] * s[2]);
                self.accumulate(grads, x, |buf| {
                    for ch in 0..c {
                        for t in 0..n {
                            buf[ch * n + t] = buf[ch * n + t] + g[t * c + ch];
                        }
                    }
                });
            }
        }
        Ok(())
    }
}

#[inline]
fn i_id(i: usize) -> TensorId {
    TensorId(i as u32)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddRowVec(..) => "add_row_vec",
        Op::MulRowVec(..) => "mul_row_vec",
        Op::Matmul(..) => "matmul",
        Op::MatmulTb(..) => "matmul_tb",
        Op::Reshape(..) => "reshape",
        Op::ConcatRows(..) => "concat_rows",
        Op::SliceRows { .. } => "slice_rows",
        Op::Conv2d { .. } => "conv2d",
        Op::ConvTranspose2d { .. } => "conv_transpose2d",
        Op::Attention { .. } => "attention",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Softmax(..) => "softmax",
        Op::Gelu(..) => "gelu",
        Op::Relu(..) => "relu",
        Op::Softplus(..) => "softplus",
        Op::Ln(..) => "ln",
        Op::Sqrt(..) => "sqrt",
        Op::Sum(..) => "sum",
        Op::BilinearResize(..) => "bilinear_resize",
        Op::TokensToGrid(..) => "tokens_to_grid",
        Op::GridToTokens(..) => "grid_to_tokens",
    }
}

fn zip_map<E: Element>(a: &[E], b: &[E], f: impl Fn(E, E) -> E) -> Vec<E> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn add_into<E: Element>(buf: &mut [E], g: &[E]) {
    for (b, &gv) in buf.iter_mut().zip(g) {
        *b = *b + gv;
    }
}

fn sub_into<E: Element>(buf: &mut [E], g: &[E]) {
    for (b, &gv) in buf.iter_mut().zip(g) {
        *b = *b - gv;
    }
}

fn add_channel_bias<E: Element>(out: &mut [E], bias: &[E], channels: usize, plane: usize) {
    for (c, &bv) in bias.iter().enumerate().take(channels) {
        for v in out[c * plane..(c + 1) * plane].iter_mut() {
            *v = *v + bv;
        }
    }
}

fn channel_bias_grad<E: Element>(buf: &mut [E], g: &[E], channels: usize, plane: usize) {
    for (c, b) in buf.iter_mut().enumerate().take(channels) {
        let mut acc = E::zero();
        for &gv in &g[c * plane..(c + 1) * plane] {
            acc = acc + gv;
        }
        *b = *b + acc;
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn t32(tape: &mut Tape<f32>, shape: &[usize], data: &[f32]) -> TensorId {
        tape.leaf(shape, Arc::new(data.to_vec()), true).unwrap()
    }

    #[test]
    fn matmul_identity_and_row_sums() {
        let mut tape = Tape::<f32>::new();
        let i2 = t32(&mut tape, &[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let m = tape.matmul(i2, i2).unwrap();
        assert_eq!(tape.data(m), &[1.0, 0.0, 0.0, 1.0]);

        let a = t32(&mut tape, &[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let ones = t32(&mut tape, &[2, 1], &[1.0, 1.0]);
        let v = tape.matmul(a, ones).unwrap();
        assert_eq!(tape.shape(v), &[2, 1]);
        assert_eq!(tape.data(v), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape = Tape::<f32>::new();
        let a = t32(&mut tape, &[2, 3], &[0.0; 6]);
        let b = t32(&mut tape, &[2, 2], &[0.0; 4]);
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn conv2d_identity_kernel() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[1, 4, 4], &[1.0; 16]);
        let w = t32(&mut tape, &[1, 1, 1, 1], &[1.0]);
        let y = tape.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 4, 4]);
        assert_eq!(tape.data(y), tape.data(x));
    }

    #[test]
    fn conv2d_patchify_shape() {
        // The patch-embedding configuration: 3×352×352, k=16, s=16, p=0, 768
        // filters gives 768×22×22.
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(&[3, 352, 352], vec![0.0; 3 * 352 * 352]).unwrap();
        let w = tape.constant(&[768, 3, 16, 16], vec![0.0; 768 * 3 * 256]).unwrap();
        let y = tape.conv2d(x, w, None, 16, 0).unwrap();
        assert_eq!(tape.shape(y), &[768, 22, 22]);
    }

    #[test]
    fn conv2d_matches_sliding_window_oracle() {
        let mut rng_state = 0x12345u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f32 / (1u64 << 31) as f32) - 0.5
        };
        let x: Vec<f32> = (0..25).map(|_| next()).collect();
        let w: Vec<f32> = (0..9).map(|_| next()).collect();
        let mut tape = Tape::<f32>::new();
        let xt = t32(&mut tape, &[1, 5, 5], &x);
        let wt = t32(&mut tape, &[1, 1, 3, 3], &w);
        let y = tape.conv2d(xt, wt, None, 1, 1).unwrap();
        assert_eq!(tape.shape(y), &[1, 5, 5]);
        // direct per-pixel dot products
        for oh in 0..5i64 {
            for ow in 0..5i64 {
                let mut acc = 0.0f32;
                for kh in 0..3i64 {
                    for kw in 0..3i64 {
                        let (ih, iw) = (oh + kh - 1, ow + kw - 1);
                        if (0..5).contains(&ih) && (0..5).contains(&iw) {
                            acc += x[(ih * 5 + iw) as usize] * w[(kh * 3 + kw) as usize];
                        }
                    }
                }
                let got = tape.data(y)[(oh * 5 + ow) as usize];
                assert!((got - acc).abs() < 1e-5, "({oh},{ow}) {got} vs {acc}");
            }
        }
    }

    #[test]
    fn conv_transpose_shapes_and_tiling() {
        let mut tape = Tape::<f32>::new();
        // (22−1)·4 + 4 = 88
        let x = tape.constant(&[64, 22, 22], vec![0.0; 64 * 22 * 22]).unwrap();
        let w = tape.constant(&[64, 32, 4, 4], vec![0.0; 64 * 32 * 16]).unwrap();
        let y = tape.conv_transpose2d(x, w, None, 4, 0).unwrap();
        assert_eq!(tape.shape(y), &[32, 88, 88]);

        let x2 = tape.constant(&[32, 88, 88], vec![0.0; 32 * 88 * 88]).unwrap();
        let w2 = tape.constant(&[32, 1, 4, 4], vec![0.0; 32 * 16]).unwrap();
        let y2 = tape.conv_transpose2d(x2, w2, None, 4, 0).unwrap();
        assert_eq!(tape.shape(y2), &[1, 352, 352]);

        // unit 2×2 kernel with stride 2 tiles each value into its own block
        let xs = t32(&mut tape, &[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let ws = t32(&mut tape, &[1, 1, 2, 2], &[1.0; 4]);
        let ys = tape.conv_transpose2d(xs, ws, None, 2, 0).unwrap();
        assert_eq!(tape.shape(ys), &[1, 4, 4]);
        #[rustfmt::skip]
        let expect = [
            1.0, 1.0, 2.0, 2.0,
            1.0, 1.0, 2.0, 2.0,
            3.0, 3.0, 4.0, 4.0,
            3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(tape.data(ys), &expect);
    }

    #[test]
    fn layer_norm_examples() {
        let mut tape = Tape::<f32>::new();
        let gamma = t32(&mut tape, &[3], &[1.0; 3]);
        let beta = t32(&mut tape, &[3], &[0.0; 3]);
        let c = t32(&mut tape, &[1, 3], &[5.0, 5.0, 5.0]);
        let y = tape.layer_norm(c, gamma, beta, 1e-5).unwrap();
        for &v in tape.data(y) {
            assert!(v.abs() < 1e-3);
        }

        let g2 = t32(&mut tape, &[2], &[1.0; 2]);
        let b2 = t32(&mut tape, &[2], &[0.0; 2]);
        let x = t32(&mut tape, &[1, 2], &[1.0, 3.0]);
        let y = tape.layer_norm(x, g2, b2, 0.0).unwrap();
        assert!((tape.data(y)[0] + 1.0).abs() < 1e-6);
        assert!((tape.data(y)[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_row_statistics() {
        let mut rng = 7u64;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng >> 33) as f32 / (1u64 << 31) as f32) * 3.0
        };
        let x: Vec<f32> = (0..32).map(|_| next()).collect();
        let mut tape = Tape::<f32>::new();
        let gamma = t32(&mut tape, &[8], &[1.0; 8]);
        let beta = t32(&mut tape, &[8], &[0.0; 8]);
        let xt = t32(&mut tape, &[4, 8], &x);
        let y = tape.layer_norm(xt, gamma, beta, 1e-12).unwrap();
        for r in 0..4 {
            let row = &tape.data(y)[r * 8..(r + 1) * 8];
            let mean: f32 = row.iter().sum::<f32>() / 8.0;
            let var: f32 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 8.0;
            assert!(mean.abs() < 1e-6, "row mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "row var {var}");
        }
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[3], &[0.0, 0.0, 0.0]);
        let y = tape.softmax(x).unwrap();
        for &v in tape.data(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let big = t32(&mut tape, &[2], &[1000.0, 0.0]);
        let y = tape.softmax(big).unwrap();
        assert_eq!(tape.data(y)[0], 1.0);
        assert_eq!(tape.data(y)[1], 0.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = 99u64;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng >> 33) as f32 / (1u64 << 31) as f32) * 4.0 - 2.0
        };
        let x: Vec<f32> = (0..15).map(|_| next()).collect();
        let mut tape = Tape::<f32>::new();
        let xt = t32(&mut tape, &[3, 5], &x);
        let y = tape.softmax(xt).unwrap();
        for r in 0..3 {
            let s: f32 = tape.data(y)[r * 5..(r + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(tape.data(y)[r * 5..(r + 1) * 5].iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn softplus_and_gelu_values() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[3], &[0.0, 50.0, -40.0]);
        let y = tape.softplus(x).unwrap();
        assert!((tape.data(y)[0] - core::f32::consts::LN_2).abs() < 1e-6);
        assert!((tape.data(y)[1] - 50.0).abs() < 1e-6);
        assert!(tape.data(y)[2] > 0.0);

        let g = tape.gelu(x).unwrap();
        assert_eq!(tape.data(g)[0], 0.0);
    }

    #[test]
    fn gelu_gradient_at_zero_is_half() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[1], &[0.0]);
        let y = tape.gelu(x).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert!((tape.grad(x).unwrap()[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn bilinear_resize_identity_and_constant() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let same = tape.bilinear_resize(x, 3, 3).unwrap();
        assert_eq!(tape.data(same), tape.data(x));

        let c = t32(&mut tape, &[1, 4, 4], &[2.5; 16]);
        let y = tape.bilinear_resize(c, 7, 3).unwrap();
        for &v in tape.data(y) {
            assert!((v - 2.5).abs() < 1e-6);
        }

        let up = tape.bilinear_resize(x, 352, 352).unwrap();
        assert_eq!(tape.shape(up), &[1, 352, 352]);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]);
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_of_half_square_is_x() {
        let mut tape = Tape::<f32>::new();
        let data = [1.0f32, -2.0, 3.0, 0.25];
        let x = t32(&mut tape, &[4], &data);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        tape.backward(half).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &data);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[2, 2], &[1.0; 4]);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn frozen_leaves_receive_no_grad() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[2], &[1.0, 2.0]);
        let frozen = tape.leaf(&[2], Arc::new(vec![3.0, 4.0]), false).unwrap();
        let y = tape.mul(x, frozen).unwrap();
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 4.0]);
        assert!(tape.grad(frozen).is_none());
    }

    #[test]
    fn tokens_grid_round_trip() {
        let mut tape = Tape::<f32>::new();
        let x = t32(&mut tape, &[4, 3], &(0..12).map(|v| v as f32).collect::<Vec<_>>());
        let grid = tape.tokens_to_grid(x, 2).unwrap();
        assert_eq!(tape.shape(grid), &[3, 2, 2]);
        assert_eq!(tape.data(grid)[0..4], [0.0, 3.0, 6.0, 9.0]);
        let back = tape.grid_to_tokens(grid).unwrap();
        assert_eq!(tape.data(back), tape.data(x));
    }

    #[test]
    fn concat_and_slice_rows() {
        let mut tape = Tape::<f32>::new();
        let a = t32(&mut tape, &[1, 2], &[1.0, 2.0]);
        let b = t32(&mut tape, &[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let cat = tape.concat_rows(&[a, b]).unwrap();
        assert_eq!(tape.shape(cat), &[3, 2]);
        let mid = tape.slice_rows(cat, 1, 1).unwrap();
        assert_eq!(tape.data(mid), &[3.0, 4.0]);
        let s = tape.sum(mid).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(b).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(tape.grad(a).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let run = || {
            let mut tape = Tape::<f32>::new();
            let x = t32(&mut tape, &[4, 4], &(0..16).map(|v| (v as f32).sin()).collect::<Vec<_>>());
            let w = t32(&mut tape, &[4, 4], &(0..16).map(|v| (v as f32).cos()).collect::<Vec<_>>());
            let y = tape.matmul(x, w).unwrap();
            let sm = tape.softmax(y).unwrap();
            tape.data(sm).iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
