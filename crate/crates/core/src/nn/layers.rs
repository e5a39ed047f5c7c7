//! Layer kernels with explicit backward passes.
//!
//! The `*_sample` functions work on one `(H, W, C)` image stored row-major
//! with channels innermost; the model calls them directly. The tensor-level
//! functions wrap them for whole `(B, H, W, C)` batches.
//!
//! Convolutions are stride-1 cross-correlations with zero "same" padding:
//! `pad_top = (kh - 1) / 2` and the bottom gets the remainder (likewise for
//! columns), so even kernels lean towards the bottom right.

use super::tensor::{Scalar, Tensor};
use crate::error::{AtrError, Result};
use crate::rng::SplitMix64;

/// Spatial shape of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape3 {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub const fn len(self) -> usize {
        self.h * self.w * self.c
    }

    pub const fn is_empty(self) -> bool {
        self.len() == 0
    }
}

/// Kernel geometry `(kh, kw, cin, cout)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelShape {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
}

impl KernelShape {
    pub const fn new(kh: usize, kw: usize, cin: usize, cout: usize) -> Self {
        Self { kh, kw, cin, cout }
    }

    pub const fn len(self) -> usize {
        self.kh * self.kw * self.cin * self.cout
    }

    pub const fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn dims(self) -> [usize; 4] {
        [self.kh, self.kw, self.cin, self.cout]
    }
}

/// Valid output columns for kernel column `kx`: those whose input column
/// `x + kx - pad` falls inside the image.
#[inline]
fn col_range(w: usize, kx: usize, pad: usize) -> (usize, usize) {
    (pad.saturating_sub(kx), (w + pad).saturating_sub(kx).min(w))
}

/// `y += a * x`, unrolled for the channel counts the model uses.
#[inline(always)]
fn axpy<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    #[inline(always)]
    fn fixed<T: Scalar, const N: usize>(y: &mut [T], x: &[T], a: T) {
        let y: &mut [T; N] = y.try_into().unwrap();
        let x: &[T; N] = x[..N].try_into().unwrap();
        for i in 0..N {
            y[i] += a * x[i];
        }
    }
    match y.len() {
        8 => fixed::<T, 8>(y, x, a),
        10 => fixed::<T, 10>(y, x, a),
        12 => fixed::<T, 12>(y, x, a),
        _ => {
            for (yy, &xx) in y.iter_mut().zip(x) {
                *yy += a * xx;
            }
        }
    }
}

#[inline(always)]
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        acc += a * b;
    }
    acc
}

/// Overwrites `out` (`h * w * cout`) with the convolution of `x`.
pub fn conv_forward_sample<T: Scalar>(x: &[T], s: Shape3, k: &[T], ks: KernelShape, bias: &[T], out: &mut [T]) {
    debug_assert_eq!(x.len(), s.len());
    debug_assert_eq!(out.len(), s.h * s.w * ks.cout);
    let (cin, cout) = (ks.cin, ks.cout);
    for px in out.chunks_exact_mut(cout) {
        px.copy_from_slice(bias);
    }
    let (pt, pl) = ((ks.kh - 1) / 2, (ks.kw - 1) / 2);
    for y in 0..s.h {
        let orow = &mut out[y * s.w * cout..(y + 1) * s.w * cout];
        for ky in 0..ks.kh {
            let Some(iy) = (y + ky).checked_sub(pt).filter(|&iy| iy < s.h) else {
                continue;
            };
            let xrow = &x[iy * s.w * cin..(iy + 1) * s.w * cin];
            for kx in 0..ks.kw {
                let slab = &k[(ky * ks.kw + kx) * cin * cout..][..cin * cout];
                let (x0, x1) = col_range(s.w, kx, pl);
                for xo in x0..x1 {
                    let ix = xo + kx - pl;
                    let xin = &xrow[ix * cin..(ix + 1) * cin];
                    let o = &mut orow[xo * cout..(xo + 1) * cout];
                    for (ci, &v) in xin.iter().enumerate() {
                        axpy(o, &slab[ci * cout..(ci + 1) * cout], v);
                    }
                }
            }
        }
    }
}

/// Accumulates kernel and bias gradients into `gk`/`gb` and, if given,
/// the input gradient into `gx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward_sample<T: Scalar>(
    g: &[T],
    x: &[T],
    s: Shape3,
    k: &[T],
    ks: KernelShape,
    gk: &mut [T],
    gb: &mut [T],
    mut gx: Option<&mut [T]>,
) {
    let (cin, cout) = (ks.cin, ks.cout);
    for px in g.chunks_exact(cout) {
        for (b, &v) in gb.iter_mut().zip(px) {
            *b += v;
        }
    }
    let (pt, pl) = ((ks.kh - 1) / 2, (ks.kw - 1) / 2);
    for y in 0..s.h {
        let grow = &g[y * s.w * cout..(y + 1) * s.w * cout];
        for ky in 0..ks.kh {
            let Some(iy) = (y + ky).checked_sub(pt).filter(|&iy| iy < s.h) else {
                continue;
            };
            let xrow = &x[iy * s.w * cin..(iy + 1) * s.w * cin];
            for kx in 0..ks.kw {
                let off = (ky * ks.kw + kx) * cin * cout;
                let slab = &k[off..off + cin * cout];
                let gslab = &mut gk[off..off + cin * cout];
                let (x0, x1) = col_range(s.w, kx, pl);
                for xo in x0..x1 {
                    let ix = xo + kx - pl;
                    let gpx = &grow[xo * cout..(xo + 1) * cout];
                    let xin = &xrow[ix * cin..(ix + 1) * cin];
                    for (ci, &v) in xin.iter().enumerate() {
                        axpy(&mut gslab[ci * cout..(ci + 1) * cout], gpx, v);
                    }
                    if let Some(gx) = gx.as_deref_mut() {
                        let gxin = &mut gx[(iy * s.w + ix) * cin..(iy * s.w + ix + 1) * cin];
                        for (ci, gxv) in gxin.iter_mut().enumerate() {
                            *gxv += dot(&slab[ci * cout..(ci + 1) * cout], gpx);
                        }
                    }
                }
            }
        }
    }
}

/// Output shape of a non-overlapping `p x p` average pool.
pub fn pool_shape(s: Shape3, p: usize) -> Result<Shape3> {
    if p == 0 {
        return Err(AtrError::InvalidParameter("pool size must be >= 1".into()));
    }
    let out = Shape3::new(s.h / p, s.w / p, s.c);
    if out.h == 0 || out.w == 0 {
        return Err(AtrError::Shape(format!("pool {p} on {}x{} leaves an empty output", s.h, s.w)));
    }
    Ok(out)
}

pub fn pool_forward_sample<T: Scalar>(x: &[T], s: Shape3, p: usize, out: &mut [T]) {
    let (oh, ow, c) = (s.h / p, s.w / p, s.c);
    let scale = T::of(1.0 / (p * p) as f64);
    out.fill(T::zero());
    for oy in 0..oh {
        for dy in 0..p {
            let row = &x[(oy * p + dy) * s.w * c..];
            for ox in 0..ow {
                let o = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
                for dx in 0..p {
                    let px = &row[(ox * p + dx) * c..(ox * p + dx + 1) * c];
                    for (oo, &v) in o.iter_mut().zip(px) {
                        *oo += v;
                    }
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v *= scale;
    }
}

/// Spreads `g / p^2` over each pooled block; rows and columns dropped by the
/// floor get zero.
pub fn pool_backward_sample<T: Scalar>(g: &[T], s: Shape3, p: usize, gx: &mut [T]) {
    let (oh, ow, c) = (s.h / p, s.w / p, s.c);
    let scale = T::of(1.0 / (p * p) as f64);
    gx.fill(T::zero());
    for oy in 0..oh {
        for dy in 0..p {
            let row = (oy * p + dy) * s.w * c;
            for ox in 0..ow {
                let gpx = &g[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
                for dx in 0..p {
                    let dst = &mut gx[row + (ox * p + dx) * c..][..c];
                    for (d, &v) in dst.iter_mut().zip(gpx) {
                        *d = v * scale;
                    }
                }
            }
        }
    }
}

#[inline]
pub fn relu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `g` by the activation pattern; the subgradient at 0 is 0.
#[inline]
pub fn relu_backward_in_place<T: Scalar>(g: &mut [T], activated: &[T]) {
    for (gv, &a) in g.iter_mut().zip(activated) {
        if a <= T::zero() {
            *gv = T::zero();
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub const PROB_CLAMP: f64 = 1e-7;

#[inline]
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Binary cross-entropy of one prediction after clamping.
#[inline]
pub fn bce(p: f64, y: f64) -> f64 {
    let p = clamp_probability(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mean binary cross-entropy over a batch of probabilities.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<f64> {
    if p.len() != y.len() || p.is_empty() {
        return Err(AtrError::Shape(format!("{} predictions for {} labels", p.len(), y.len())));
    }
    Ok(p.iter().zip(y).map(|(&p, &y)| bce(p, y)).sum::<f64>() / p.len() as f64)
}

/// Fused sigmoid + BCE on logits: returns the mean loss and the gradient
/// `(sigmoid(z) - y) / B` with respect to each logit.
pub fn bce_with_logits(z: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p: Vec<f64> = z.iter().map(|&z| sigmoid(z)).collect();
    let loss = bce_loss(&p, y)?;
    let b = z.len() as f64;
    Ok((loss, p.iter().zip(y).map(|(p, y)| (p - y) / b).collect()))
}

/// Draws an inverted-dropout mask: 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar>(n: usize, rate: f64, rng: &mut SplitMix64) -> Result<Vec<T>> {
    check_rate(rate)?;
    if rate == 0.0 {
        return Ok(vec![T::one(); n]);
    }
    let keep = T::of(1.0 / (1.0 - rate));
    Ok((0..n).map(|_| if rng.uniform() < rate { T::zero() } else { keep }).collect())
}

pub fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(AtrError::InvalidParameter(format!("dropout rate must be in [0, 1), got {rate}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// ---- batch-level wrappers ---------------------------------------------

fn kernel_shape<T: Scalar>(k: &Tensor<T>) -> Result<KernelShape> {
    match k.dims()[..] {
        [kh, kw, cin, cout] if kh > 0 && kw > 0 && cin > 0 && cout > 0 => Ok(KernelShape::new(kh, kw, cin, cout)),
        _ => Err(AtrError::Shape(format!("kernel dims {:?} are not (kh, kw, cin, cout)", k.dims()))),
    }
}

pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, k: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = x.hwc()?;
    let ks = kernel_shape(k)?;
    if c != ks.cin {
        return Err(AtrError::Shape(format!("input has {c} channels, kernel expects {}", ks.cin)));
    }
    if bias.len() != ks.cout {
        return Err(AtrError::Shape(format!("bias has {} entries for {} filters", bias.len(), ks.cout)));
    }
    let s = Shape3::new(h, w, c);
    let n_out = h * w * ks.cout;
    let mut out = Tensor::zeros(&[x.batch(), h, w, ks.cout]);
    for (i, o) in out.data_mut().chunks_exact_mut(n_out).enumerate() {
        conv_forward_sample(x.sample(i), s, k.data(), ks, bias.data(), o);
    }
    Ok(out)
}

/// Returns `(grad_x, grad_kernel, grad_bias)`.
pub fn conv2d_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    k: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (h, w, c) = x.hwc()?;
    let ks = kernel_shape(k)?;
    if g.dims() != [x.batch(), h, w, ks.cout] || c != ks.cin {
        return Err(AtrError::Shape(format!(
            "gradient {:?} does not match input {:?} and kernel {:?}",
            g.dims(),
            x.dims(),
            k.dims()
        )));
    }
    let s = Shape3::new(h, w, c);
    let mut gx = Tensor::zeros(x.dims());
    let mut gk = Tensor::zeros(k.dims());
    let mut gb = Tensor::zeros(&[ks.cout]);
    for (i, gxs) in gx.data_mut().chunks_exact_mut(s.len()).enumerate() {
        conv_backward_sample(g.sample(i), x.sample(i), s, k.data(), ks, gk.data_mut(), gb.data_mut(), Some(gxs));
    }
    Ok((gx, gk, gb))
}

pub fn avgpool_forward<T: Scalar>(x: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let (h, w, c) = x.hwc()?;
    let s = Shape3::new(h, w, c);
    let o = pool_shape(s, p)?;
    let mut out = Tensor::zeros(&[x.batch(), o.h, o.w, c]);
    for (i, os) in out.data_mut().chunks_exact_mut(o.len()).enumerate() {
        pool_forward_sample(x.sample(i), s, p, os);
    }
    Ok(out)
}

pub fn avgpool_backward<T: Scalar>(g: &Tensor<T>, input_dims: &[usize], p: usize) -> Result<Tensor<T>> {
    let [b, h, w, c] = input_dims[..] else {
        return Err(AtrError::Shape(format!("input dims {input_dims:?} are not (B, H, W, C)")));
    };
    let s = Shape3::new(h, w, c);
    let o = pool_shape(s, p)?;
    if g.dims() != [b, o.h, o.w, c] {
        return Err(AtrError::Shape(format!("pool gradient {:?} vs expected {:?}", g.dims(), [b, o.h, o.w, c])));
    }
    let mut gx = Tensor::zeros(input_dims);
    for (i, gs) in gx.data_mut().chunks_exact_mut(s.len()).enumerate() {
        pool_backward_sample(g.sample(i), s, p, gs);
    }
    Ok(gx)
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = x.clone();
    relu_in_place(out.data_mut());
    out
}

/// Gradient of ReLU given the layer's input (or output; the sign pattern is
/// the same).
pub fn relu_backward<T: Scalar>(g: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    same_dims(g, x, "relu")?;
    let mut out = g.clone();
    relu_backward_in_place(out.data_mut(), x.data());
    Ok(out)
}

fn same_dims<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(AtrError::Shape(format!("{what}: {:?} vs {:?}", a.dims(), b.dims())))
    }
}

pub fn add_forward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_dims(a, b, "add")?;
    let mut out = a.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(b.data()) {
        *o += v;
    }
    Ok(out)
}

/// `(B, H, W, C)` to `(B, H * W * C)`, row-major.
pub fn flatten<T: Scalar>(x: Tensor<T>) -> Result<Tensor<T>> {
    let b = x.batch();
    let n = x.sample_len();
    x.reshape(&[b, n])
}

/// Joins `(B, F_i)` matrices along the feature axis, in the given order.
pub fn concatenate<T: Scalar>(parts: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| AtrError::Shape("nothing to concatenate".into()))?;
    let b = first.batch();
    if parts.iter().any(|p| p.dims().len() != 2 || p.batch() != b) {
        return Err(AtrError::Shape("concatenate needs (B, F) inputs with equal B".into()));
    }
    let total: usize = parts.iter().map(|p| p.dims()[1]).sum();
    let mut data = Vec::with_capacity(b * total);
    for i in 0..b {
        for p in parts {
            data.extend_from_slice(p.sample(i));
        }
    }
    Tensor::from_parts(vec![b, total], data)
}

/// Splits a `(B, sum F_i)` gradient back into the concatenated parts.
pub fn split_features<T: Scalar>(g: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let b = g.batch();
    if g.dims() != [b, widths.iter().sum::<usize>()] {
        return Err(AtrError::Shape(format!("cannot split {:?} into widths {widths:?}", g.dims())));
    }
    let mut parts: Vec<Vec<T>> = widths.iter().map(|&w| Vec::with_capacity(b * w)).collect();
    for i in 0..b {
        let mut row = g.sample(i);
        for (part, &w) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&row[..w]);
            row = &row[w..];
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::from_parts(vec![b, w], d))
        .collect()
}

/// Inverted dropout. Returns the output and the mask that backward must
/// multiply by; in eval mode both are the identity.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, mode: Mode, rng: &mut SplitMix64) -> Result<(Tensor<T>, Vec<T>)> {
    check_rate(rate)?;
    let mask = match mode {
        Mode::Eval => vec![T::one(); x.len()],
        Mode::Train => dropout_mask(x.len(), rate, rng)?,
    };
    let mut out = x.clone();
    for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((out, mask))
}

/// `(B, F) x (F, 1) + b`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let f = dense_check(x, w, bias)?;
    let out: Vec<T> = (0..x.batch())
        .map(|i| {
            let mut acc = bias.data()[0];
            for (&a, &b) in x.sample(i).iter().zip(w.data()) {
                acc += a * b;
            }
            acc
        })
        .collect();
    debug_assert_eq!(w.len(), f);
    Tensor::from_parts(vec![x.batch(), 1], out)
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn dense_backward<T: Scalar>(
    g: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let b = x.batch();
    if g.dims() != [b, 1] {
        return Err(AtrError::Shape(format!("dense gradient {:?}, expected [{b}, 1]", g.dims())));
    }
    let mut gx = Tensor::zeros(x.dims());
    let mut gw = Tensor::zeros(w.dims());
    let mut gb = T::zero();
    let f = x.sample_len();
    for i in 0..b {
        let gi = g.data()[i];
        gb += gi;
        for (j, gwj) in gw.data_mut().iter_mut().enumerate() {
            *gwj += gi * x.sample(i)[j];
        }
        for (gxj, &wj) in gx.data_mut()[i * f..(i + 1) * f].iter_mut().zip(w.data()) {
            *gxj = gi * wj;
        }
    }
    Ok((gx, gw, Tensor::from_parts(vec![1], vec![gb])?))
}

fn dense_check<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: &Tensor<T>) -> Result<usize> {
    let f = match x.dims()[..] {
        [_, f] => f,
        _ => return Err(AtrError::Shape(format!("dense input {:?} is not (B, F)", x.dims()))),
    };
    if w.dims() != [f, 1] || bias.len() != 1 {
        return Err(AtrError::Shape(format!("dense weights {:?} / bias {:?} for {f} features", w.dims(), bias.dims())));
    }
    Ok(f)
}
