//! Raw array kernels behind the tape ops. Everything here accumulates into
//! caller-provided buffers with a fixed sequential loop order, so results are
//! bitwise-reproducible run to run.

use crate::element::Element;
#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;

/// out[m×n] += a[m×k] · b[k×n]
pub fn matmul_nn<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &ap) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + ap * brow[j];
            }
        }
    }
}

/// Dot product with eight independent accumulators. The reduction order is
/// fixed (still bitwise-deterministic) but, unlike a single running sum, the
/// lanes have no sequential dependency and vectorize.
#[inline]
pub fn dot<E: Element>(a: &[E], b: &[E]) -> E {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [E::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let ac = &a[c * 8..(c + 1) * 8];
        let bc = &b[c * 8..(c + 1) * 8];
        for l in 0..8 {
            lanes[l] = lanes[l] + ac[l] * bc[l];
        }
    }
    let mut tail = E::zero();
    for p in chunks * 8..a.len() {
        tail = tail + a[p] * b[p];
    }
    let s01 = lanes[0] + lanes[1];
    let s23 = lanes[2] + lanes[3];
    let s45 = lanes[4] + lanes[5];
    let s67 = lanes[6] + lanes[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

/// out[m×n] += a[m×k] · b[n×k]ᵀ
pub fn matmul_nt<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            orow[j] = orow[j] + dot(arow, brow);
        }
    }
}

/// out[m×n] += a[k×m]ᵀ · b[k×n]
pub fn matmul_tn<E: Element>(a: &[E], b: &[E], m: usize, k: usize, n: usize, out: &mut [E]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] = orow[j] + api * brow[j];
            }
        }
    }
}

/// Range of output indices `o` such that `o*stride + offset` lands in
/// `[0, in_len)`. `offset` may be negative (padding).
fn valid_range(out_len: usize, stride: usize, offset: i64, in_len: usize) -> (usize, usize) {
    let s = stride as i64;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let hi = ((in_len as i64 - 1 - offset).div_euclid(s) + 1).clamp(0, out_len as i64);
    if lo >= hi {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}

pub struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

/// out[c_out×oh×ow] += conv2d(x[c_in×h×w], weight[c_out×c_in×k×k])
pub fn conv2d<E: Element>(x: &[E], weight: &[E], d: &ConvDims, out: &mut [E]) {
    let p = d.padding as i64;
    for co in 0..d.c_out {
        for ci in 0..d.c_in {
            let xplane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for kh in 0..d.k {
                let (oh_lo, oh_hi) = valid_range(d.oh, d.stride, kh as i64 - p, d.h);
                for kw in 0..d.k {
                    let wv = weight[((co * d.c_in + ci) * d.k + kh) * d.k + kw];
                    let (ow_lo, ow_hi) = valid_range(d.ow, d.stride, kw as i64 - p, d.w);
                    for oh in oh_lo..oh_hi {
                        let ih = (oh * d.stride) as i64 + kh as i64 - p;
                        let xrow = &xplane[ih as usize * d.w..(ih as usize + 1) * d.w];
                        let orow = &mut out[(co * d.oh + oh) * d.ow..(co * d.oh + oh + 1) * d.ow];
                        for ow in ow_lo..ow_hi {
                            let iw = (ow * d.stride) as i64 + kw as i64 - p;
                            orow[ow] = orow[ow] + wv * xrow[iw as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv2d`]. Any of the output buffers may be `None`.
pub fn conv2d_backward<E: Element>(
    x: &[E],
    weight: &[E],
    dy: &[E],
    d: &ConvDims,
    dx: Option<&mut [E]>,
    dw: Option<&mut [E]>,
) {
    let p = d.padding as i64;
    if let Some(dx) = dx {
        for co in 0..d.c_out {
            for ci in 0..d.c_in {
                let dxplane = &mut dx[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                for kh in 0..d.k {
                    let (oh_lo, oh_hi) = valid_range(d.oh, d.stride, kh as i64 - p, d.h);
                    for kw in 0..d.k {
                        let wv = weight[((co * d.c_in + ci) * d.k + kh) * d.k + kw];
                        let (ow_lo, ow_hi) = valid_range(d.ow, d.stride, kw as i64 - p, d.w);
                        for oh in oh_lo..oh_hi {
                            let ih = ((oh * d.stride) as i64 + kh as i64 - p) as usize;
                            let dyrow =
                                &dy[(co * d.oh + oh) * d.ow..(co * d.oh + oh + 1) * d.ow];
                            for ow in ow_lo..ow_hi {
                                let iw = ((ow * d.stride) as i64 + kw as i64 - p) as usize;
                                dxplane[ih * d.w + iw] = dxplane[ih * d.w + iw] + wv * dyrow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(dw) = dw {
        for co in 0..d.c_out {
            for ci in 0..d.c_in {
                let xplane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
                for kh in 0..d.k {
                    let (oh_lo, oh_hi) = valid_range(d.oh, d.stride, kh as i64 - p, d.h);
                    for kw in 0..d.k {
                        let (ow_lo, ow_hi) = valid_range(d.ow, d.stride, kw as i64 - p, d.w);
                        let mut acc = E::zero();
                        for oh in oh_lo..oh_hi {
                            let ih = ((oh * d.stride) as i64 + kh as i64 - p) as usize;
                            let xrow = &xplane[ih * d.w..(ih + 1) * d.w];
                            let dyrow =
                                &dy[(co * d.oh + oh) * d.ow..(co * d.oh + oh + 1) * d.ow];
                            for ow in ow_lo..ow_hi {
                                let iw = ((ow * d.stride) as i64 + kw as i64 - p) as usize;
                                acc = acc + xrow[iw] * dyrow[ow];
                            }
                        }
                        let wi = ((co * d.c_in + ci) * d.k + kh) * d.k + kw;
                        dw[wi] = dw[wi] + acc;
                    }
                }
            }
        }
    }
}

/// out[c_out×oh×ow] += conv_transpose2d(x[c_in×h×w], weight[c_in×c_out×k×k]).
/// `d.oh/d.ow` are the transposed output sizes `(h−1)·stride − 2·padding + k`;
/// `d.h/d.w` are the input sizes. This is the exact adjoint of [`conv2d`].
pub fn conv_transpose2d<E: Element>(x: &[E], weight: &[E], d: &ConvDims, out: &mut [E]) {
    let p = d.padding as i64;
    for ci in 0..d.c_in {
        let xplane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for co in 0..d.c_out {
            for kh in 0..d.k {
                let (ih_lo, ih_hi) = valid_range(d.h, d.stride, kh as i64 - p, d.oh);
                for kw in 0..d.k {
                    let wv = weight[((ci * d.c_out + co) * d.k + kh) * d.k + kw];
                    let (iw_lo, iw_hi) = valid_range(d.w, d.stride, kw as i64 - p, d.ow);
                    for ih in ih_lo..ih_hi {
                        let oh = ((ih * d.stride) as i64 + kh as i64 - p) as usize;
                        let xrow = &xplane[ih * d.w..(ih + 1) * d.w];
                        let orow = &mut out[(co * d.oh + oh) * d.ow..(co * d.oh + oh + 1) * d.ow];
                        for iw in iw_lo..iw_hi {
                            let ow = ((iw * d.stride) as i64 + kw as i64 - p) as usize;
                            orow[ow] = orow[ow] + wv * xrow[iw];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv_transpose2d`].
pub fn conv_transpose2d_backward<E: Element>(
    x: &[E],
    weight: &[E],
    dy: &[E],
    d: &ConvDims,
    dx: Option<&mut [E]>,
    dw: Option<&mut [E]>,
) {
    let p = d.padding as i64;
    if let Some(dx) = dx {
        for ci in 0..d.c_in {
            let dxplane = &mut dx[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for co in 0..d.c_out {
                for kh in 0..d.k {
                    let (ih_lo, ih_hi) = valid_range(d.h, d.stride, kh as i64 - p, d.oh);
                    for kw in 0..d.k {
                        let wv = weight[((ci * d.c_out + co) * d.k + kh) * d.k + kw];
                        let (iw_lo, iw_hi) = valid_range(d.w, d.stride, kw as i64 - p, d.ow);
                        for ih in ih_lo..ih_hi {
                            let oh = ((ih * d.stride) as i64 + kh as i64 - p) as usize;
                            let dyrow =
                                &dy[(co * d.oh + oh) * d.ow..(co * d.oh + oh + 1) * d.ow];
                            for iw in iw_lo..iw_hi {
                                let ow = ((iw * d.stride) as i64 + kw as i64 - p) as usize;
                                dxplane[ih * d.w + iw] = dxplane[ih * d.w + iw] + wv * dyrow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(dw) = dw {
        for ci in 0..d.c_in {
            let xplane = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for co in 0..d.c_out {
                for kh in 0..d.k {
                    let (ih_lo, ih_hi) = valid_range(d.h, d.stride, kh as i64 - p, d.oh);
                    for kw in 0..d.k {
                        let (iw_lo, iw_hi) = valid_range(d.w, d.stride, kw as i64 - p, d.ow);
                        let mut acc = E::zero();
                        for ih in ih_lo..ih_hi {
                            let oh = ((ih * d.stride) as i64 + kh as i64 - p) as usize;
                            let xrow = &xplane[ih * d.w..(ih + 1) * d.w];
                            let dyrow =
                                &dy[(co * d.oh + oh) * d.ow..(co * d.oh + oh + 1) * d.ow];
                            for iw in iw_lo..iw_hi {
                                let ow = ((iw * d.stride) as i64 + kw as i64 - p) as usize;
                                acc = acc + xrow[iw] * dyrow[ow];
                            }
                        }
                        let wi = ((ci * d.c_out + co) * d.k + kh) * d.k + kw;
                        dw[wi] = dw[wi] + acc;
                    }
                }
            }
        }
    }
}

/// Numerically stable softmax over each row, writing probabilities to `out`.
/// With `causal == true` the matrix must be square and entries `j > i` of row
/// `i` are treated as masked (probability zero).
pub fn softmax_rows<E: Element>(x: &[E], rows: usize, cols: usize, causal: bool, out: &mut [E]) {
    for i in 0..rows {
        let lim = if causal { i + 1 } else { cols };
        let xr = &x[i * cols..i * cols + lim];
        let or = &mut out[i * cols..(i + 1) * cols];
        let mut mx = xr[0];
        for &v in xr.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = E::zero();
        for j in 0..lim {
            let e = (xr[j] - mx).exp();
            or[j] = e;
            sum = sum + e;
        }
        for j in 0..lim {
            or[j] = or[j] / sum;
        }
        for v in or[lim..].iter_mut() {
            *v = E::zero();
        }
    }
}

/// dx for softmax given probabilities `y` and upstream `dy`.
pub fn softmax_backward_rows<E: Element>(
    y: &[E],
    dy: &[E],
    rows: usize,
    cols: usize,
    dx: &mut [E],
) {
    for i in 0..rows {
        let yr = &y[i * cols..(i + 1) * cols];
        let dyr = &dy[i * cols..(i + 1) * cols];
        let mut dot = E::zero();
        for j in 0..cols {
            dot = dot + yr[j] * dyr[j];
        }
        let dxr = &mut dx[i * cols..(i + 1) * cols];
        for j in 0..cols {
            dxr[j] = dxr[j] + yr[j] * (dyr[j] - dot);
        }
    }
}

pub fn layer_norm_rows<E: Element>(
    x: &[E],
    gamma: &[E],
    beta: &[E],
    rows: usize,
    d: usize,
    eps: f64,
    out: &mut [E],
) {
    let epsv = E::from_f64(eps);
    let inv_d = E::from_f64(1.0 / d as f64);
    for i in 0..rows {
        let xr = &x[i * d..(i + 1) * d];
        let or = &mut out[i * d..(i + 1) * d];
        let mut mean = E::zero();
        for &v in xr {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = E::zero();
        for &v in xr {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rstd = (var + epsv).sqrt().recip();
        for j in 0..d {
            or[j] = gamma[j] * ((xr[j] - mean) * rstd) + beta[j];
        }
    }
}

pub fn layer_norm_backward_rows<E: Element>(
    x: &[E],
    gamma: &[E],
    dy: &[E],
    rows: usize,
    d: usize,
    eps: f64,
    dx: Option<&mut [E]>,
    dgamma: Option<&mut [E]>,
    dbeta: Option<&mut [E]>,
) {
    let epsv = E::from_f64(eps);
    let inv_d = E::from_f64(1.0 / d as f64);
    let mut dx = dx;
    let mut dgamma = dgamma;
    let mut dbeta = dbeta;
    let mut xhat = vec![E::zero(); d];
    for i in 0..rows {
        let xr = &x[i * d..(i + 1) * d];
        let dyr = &dy[i * d..(i + 1) * d];
        let mut mean = E::zero();
        for &v in xr {
            mean = mean + v;
        }
        mean = mean * inv_d;
        let mut var = E::zero();
        for &v in xr {
            let c = v - mean;
            var = var + c * c;
        }
        var = var * inv_d;
        let rstd = (var + epsv).sqrt().recip();
        for j in 0..d {
            xhat[j] = (xr[j] - mean) * rstd;
        }
        if let Some(dg) = dgamma.as_deref_mut() {
            for j in 0..d {
                dg[j] = dg[j] + dyr[j] * xhat[j];
            }
        }
        if let Some(db) = dbeta.as_deref_mut() {
            for j in 0..d {
                db[j] = db[j] + dyr[j];
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            let mut m1 = E::zero();
            let mut m2 = E::zero();
            for j in 0..d {
                let dxh = dyr[j] * gamma[j];
                m1 = m1 + dxh;
                m2 = m2 + dxh * xhat[j];
            }
            m1 = m1 * inv_d;
            m2 = m2 * inv_d;
            let dxr = &mut dx[i * d..(i + 1) * d];
            for j in 0..d {
                let dxh = dyr[j] * gamma[j];
                dxr[j] = dxr[j] + rstd * (dxh - m1 - xhat[j] * m2);
            }
        }
    }
}

const GELU_C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C1: f64 = 0.044_715;

pub fn gelu<E: Element>(x: E) -> E {
    let c0 = E::from_f64(GELU_C0);
    let c1 = E::from_f64(GELU_C1);
    let half = E::from_f64(0.5);
    let u = c0 * (x + c1 * x * x * x);
    half * x * (E::one() + u.tanh())
}

pub fn gelu_grad<E: Element>(x: E) -> E {
    let c0 = E::from_f64(GELU_C0);
    let c1 = E::from_f64(GELU_C1);
    let half = E::from_f64(0.5);
    let three = E::from_f64(3.0);
    let u = c0 * (x + c1 * x * x * x);
    let t = u.tanh();
    let sech2 = E::one() - t * t;
    half * (E::one() + t) + half * x * sech2 * c0 * (E::one() + three * c1 * x * x)
}

/// softplus(x) = ln(1 + eˣ), computed without overflow for large |x|.
pub fn softplus<E: Element>(x: E) -> E {
    if x > E::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// d/dx softplus(x) = sigmoid(x), stable in both tails.
pub fn sigmoid<E: Element>(x: E) -> E {
    if x >= E::zero() {
        (E::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

/// Source coordinate mapping for bilinear resize with the
/// align-corners=false convention: `(i + 0.5)·src/dst − 0.5`, clamped.
pub fn bilinear_axis(dst: usize, src: usize, i: usize) -> (usize, usize, f64) {
    let s = (i as f64 + 0.5) * (src as f64 / dst as f64) - 0.5;
    let s = s.clamp(0.0, (src - 1) as f64);
    let lo = s.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, s - lo as f64)
}

/// out[c×th×tw] = bilinear(x[c×h×w]). Caller handles the identity case.
pub fn bilinear_resize<E: Element>(
    x: &[E],
    c: usize,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
    out: &mut [E],
) {
    for oy in 0..th {
        let (y0, y1, fy) = bilinear_axis(th, h, oy);
        let fy = E::from_f64(fy);
        for ox in 0..tw {
            let (x0, x1, fx) = bilinear_axis(tw, w, ox);
            let fx = E::from_f64(fx);
            for ch in 0..c {
                let plane = &x[ch * h * w..(ch + 1) * h * w];
                let top = plane[y0 * w + x0] + fx * (plane[y0 * w + x1] - plane[y0 * w + x0]);
                let bot = plane[y1 * w + x0] + fx * (plane[y1 * w + x1] - plane[y1 * w + x0]);
                out[(ch * th + oy) * tw + ox] = top + fy * (bot - top);
            }
        }
    }
}

pub fn bilinear_resize_backward<E: Element>(
    dy: &[E],
    c: usize,
    h: usize,
    w: usize,
    th: usize,
    tw: usize,
    dx: &mut [E],
) {
    let one = E::one();
    for oy in 0..th {
        let (y0, y1, fy) = bilinear_axis(th, h, oy);
        let fy = E::from_f64(fy);
        for ox in 0..tw {
            let (x0, x1, fx) = bilinear_axis(tw, w, ox);
            let fx = E::from_f64(fx);
            for ch in 0..c {
                let g = dy[(ch * th + oy) * tw + ox];
                let plane = &mut dx[ch * h * w..(ch + 1) * h * w];
                plane[y0 * w + x0] = plane[y0 * w + x0] + g * (one - fy) * (one - fx);
                plane[y0 * w + x1] = plane[y0 * w + x1] + g * (one - fy) * fx;
                plane[y1 * w + x0] = plane[y1 * w + x0] + g * fy * (one - fx);
                plane[y1 * w + x1] = plane[y1 * w + x1] + g * fy * fx;
            }
        }
    }
}

/// Multi-head scaled dot-product attention over one sequence.
/// q/k/v are [n×width] with `heads` contiguous column groups of size
/// width/heads; only the [n×width] context output is materialized.
pub fn attention<E: Element>(
    q: &[E],
    k: &[E],
    v: &[E],
    n: usize,
    width: usize,
    heads: usize,
    causal: bool,
    out: &mut [E],
) {
    let dh = width / heads;
    let scale = E::from_f64(1.0 / (dh as f64).sqrt());
    let mut probs = vec![E::zero(); n];
    for head in 0..heads {
        let off = head * dh;
        for i in 0..n {
            let lim = if causal { i + 1 } else { n };
            let qi = &q[i * width + off..i * width + off + dh];
            attention_row_probs(qi, k, width, off, dh, scale, lim, &mut probs[..lim]);
            let orow = &mut out[i * width + off..i * width + off + dh];
            for (j, &pj) in probs[..lim].iter().enumerate() {
                let vj = &v[j * width + off..j * width + off + dh];
                for t in 0..dh {
                    orow[t] = orow[t] + pj * vj[t];
                }
            }
        }
    }
}

/// Softmax-normalized attention probabilities of one query row against the
/// first `lim` keys of one head.
fn attention_row_probs<E: Element>(
    qi: &[E],
    k: &[E],
    width: usize,
    off: usize,
    dh: usize,
    scale: E,
    lim: usize,
    probs: &mut [E],
) {
    let mut mx = E::neg_infinity();
    for j in 0..lim {
        let kj = &k[j * width + off..j * width + off + dh];
        let s = dot(qi, kj) * scale;
        probs[j] = s;
        if s > mx {
            mx = s;
        }
    }
    let mut sum = E::zero();
    for p in probs[..lim].iter_mut() {
        let e = (*p - mx).exp();
        *p = e;
        sum = sum + e;
    }
    for p in probs[..lim].iter_mut() {
        *p = *p / sum;
    }
}

/// Gradients of [`attention`]; probabilities are recomputed per row instead
/// of being stored on the tape.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<E: Element>(
    q: &[E],
    k: &[E],
    v: &[E],
    dy: &[E],
    n: usize,
    width: usize,
    heads: usize,
    causal: bool,
    dq: &mut [E],
    dk: &mut [E],
    dv: &mut [E],
) {
    let dh = width / heads;
    let scale = E::from_f64(1.0 / (dh as f64).sqrt());
    let mut probs = vec![E::zero(); n];
    let mut dp = vec![E::zero(); n];
    for head in 0..heads {
        let off = head * dh;
        for i in 0..n {
            let lim = if causal { i + 1 } else { n };
            let qi = &q[i * width + off..i * width + off + dh];
            attention_row_probs(qi, k, width, off, dh, scale, lim, &mut probs[..lim]);
            let dyr = &dy[i * width + off..i * width + off + dh];
            // dp_j = dy_i · v_j ; ds = p ⊙ (dp − Σ p·dp)
            let mut pdot = E::zero();
            for j in 0..lim {
                let vj = &v[j * width + off..j * width + off + dh];
                let acc = dot(dyr, vj);
                dp[j] = acc;
                pdot = pdot + probs[j] * acc;
            }
            for j in 0..lim {
                let ds = probs[j] * (dp[j] - pdot) * scale;
                let kj = &k[j * width + off..j * width + off + dh];
                let dqi = &mut dq[i * width + off..i * width + off + dh];
                for t in 0..dh {
                    dqi[t] = dqi[t] + ds * kj[t];
                }
                let dkj = &mut dk[j * width + off..j * width + off + dh];
                for t in 0..dh {
                    dkj[t] = dkj[t] + ds * qi[t];
                }
                let dvj = &mut dv[j * width + off..j * width + off + dh];
                for t in 0..dh {
                    dvj[t] = dvj[t] + probs[j] * dyr[t];
                }
            }
        }
    }
}
