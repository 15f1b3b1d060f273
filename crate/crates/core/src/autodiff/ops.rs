//! Differentiable ops: forward evaluation on the tape plus the matching
//! vector-Jacobian products.
//!
//! Broadcast rule for element-wise binary ops: after dropping leading
//! singleton axes from `b`, its shape must be a suffix of `a`'s shape; `b` is
//! then tiled over the remaining leading axes of `a`. Only `b` broadcasts.
//!
//! Spatial ops use the `[H, W, B, C]` layout; a rank-3 `[H, W, C]` tensor is a
//! single sample.

use num_complex::Complex;

use super::kernels::{self, CMat, ConvGeom};
use super::{Node, Tape, Var};
use crate::error::{Error, Result};
use crate::fft;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

pub(super) enum Op<T> {
    Leaf,
    Binary { kind: BinaryKind, a: Var, b: Var },
    Scale { x: Var, s: T },
    Shift { x: Var },
    Exp(Var),
    Gelu(Var),
    Softplus { x: Var, tau: T, floor: T },
    Linear { x: Var, w: Var, b: Option<Var> },
    Sum(Var),
    Mean(Var),
    FrobNorm(Var),
    SampleNorms(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Reshape(Var),
    ToComplex(Var),
    RealPart(Var),
    Fft2(Var),
    Ifft2(Var),
    TruncFft { x: Var, modes: usize },
    TruncIfftReal { x: Var, modes: usize },
    SpectralMix { x: Var, low: Var, high: Var, modes: usize },
    Conv { x: Var, k: Var, b: Option<Var>, geom: ConvGeom },
    ConvTranspose { x: Var, k: Var, b: Option<Var>, geom: ConvGeom },
    SpatialFlatten(Var),
    SpatialUnflatten(Var),
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Number of contiguous elements of `a` that `b` covers under the broadcast rule.
fn broadcast_inner(a: &[usize], b: &[usize]) -> Option<usize> {
    let lead = b.iter().take_while(|&&d| d == 1).count();
    let b = &b[lead..];
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return None;
    }
    Some(b.iter().product())
}

/// Split a spatial shape into `(pixels, batch, channels)`.
pub(crate) fn spatial_dims(shape: &[usize]) -> Option<(usize, usize, usize, usize)> {
    match *shape {
        [h, w, b, c] => Some((h, w, b, c)),
        [h, w, c] => Some((h, w, 1, c)),
        _ => None,
    }
}

/// `tanh` through one `exp`; saturates correctly at both ends.
fn fast_tanh<T: Scalar>(z: T) -> T {
    let two = T::from_f64(2.0);
    T::one() - two / ((two * z).exp() + T::one())
}

fn gelu_fwd<T: Scalar>(x: T) -> T {
    let k = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    half * x * (T::one() + fast_tanh(k * (x + c * x * x * x)))
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::from_f64((2.0 / std::f64::consts::PI).sqrt());
    let c = T::from_f64(0.044_715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let t = fast_tanh(k * (x + c * x * x * x));
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + three * c * x * x)
}

/// `tau^-1 log(1 + exp(tau x))`, evaluated without overflow.
pub(crate) fn softplus_raw<T: Scalar>(x: T, tau: T) -> T {
    let z = tau * x;
    if z > T::from_f64(30.0) {
        x + (-z).exp() / tau
    } else {
        z.exp().ln_1p() / tau
    }
}

impl<T: Scalar> Op<T> {
    pub(super) fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Binary { a, b, .. } => vec![*a, *b],
            Op::Scale { x, .. }
            | Op::Shift { x }
            | Op::Softplus { x, .. }
            | Op::Slice { x, .. }
            | Op::TruncFft { x, .. }
            | Op::TruncIfftReal { x, .. } => vec![*x],
            Op::Exp(x)
            | Op::Gelu(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::FrobNorm(x)
            | Op::SampleNorms(x)
            | Op::Reshape(x)
            | Op::ToComplex(x)
            | Op::RealPart(x)
            | Op::Fft2(x)
            | Op::Ifft2(x)
            | Op::SpatialFlatten(x)
            | Op::SpatialUnflatten(x) => vec![*x],
            Op::Linear { x, w, b } | Op::Conv { x, k: w, b, .. } | Op::ConvTranspose { x, k: w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            Op::Concat(parts) => parts.clone(),
            Op::SpectralMix { x, low, high, .. } => vec![*x, *low, *high],
        }
    }

    /// Gradients for each grad-enabled operand given the output gradient `g`.
    pub(super) fn vjp(&self, nodes: &[Node<T>], out: &Tensor<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
        let val = |v: Var| nodes[v.0].value.as_ref();
        let need = |v: Var| nodes[v.0].requires_grad;
        let mut res = Vec::new();
        match self {
            Op::Leaf => {}
            Op::Binary { kind, a, b } => {
                let av = val(*a);
                let bv = val(*b);
                let inner = bv.numel().max(1);
                let ad = av.data();
                let bd = bv.data();
                let gd = g.data();
                if need(*a) {
                    let ga: Vec<T> = match kind {
                        BinaryKind::Add | BinaryKind::Sub => gd.to_vec(),
                        BinaryKind::Mul => gd.chunks_exact(inner).flat_map(|gc| gc.iter().zip(bd).map(|(&gi, &bi)| gi * bi)).collect(),
                        BinaryKind::Div => gd.chunks_exact(inner).flat_map(|gc| gc.iter().zip(bd).map(|(&gi, &bi)| gi / bi)).collect(),
                    };
                    res.push((*a, Tensor::new(av.shape().to_vec(), ga).unwrap()));
                }
                if need(*b) {
                    let mut gb = vec![T::zero(); bv.numel()];
                    for (gc, ac) in gd.chunks_exact(inner).zip(ad.chunks_exact(inner)) {
                        for j in 0..inner {
                            let gi = gc[j];
                            gb[j] += match kind {
                                BinaryKind::Add => gi,
                                BinaryKind::Sub => -gi,
                                BinaryKind::Mul => gi * ac[j],
                                BinaryKind::Div => -gi * ac[j] / (bd[j] * bd[j]),
                            };
                        }
                    }
                    res.push((*b, Tensor::new(bv.shape().to_vec(), gb).unwrap()));
                }
            }
            Op::Scale { x, s } => res.push((*x, g.scale(*s))),
            Op::Shift { x } => res.push((*x, g.clone())),
            Op::Exp(x) => res.push((*x, g.zip_map(out, |gi, yi| gi * yi).unwrap())),
            Op::Gelu(x) => res.push((*x, g.zip_map(val(*x), |gi, xi| gi * gelu_grad(xi)).unwrap())),
            Op::Softplus { x, tau, floor } => {
                // sigmoid(tau x) = 1 - exp(-tau softplus(x)); clamped entries sit at the floor.
                let gx = g
                    .zip_map(out, |gi, yi| {
                        if yi > *floor {
                            -gi * (-*tau * yi).exp_m1()
                        } else {
                            T::zero()
                        }
                    })
                    .unwrap();
                res.push((*x, gx));
            }
            Op::Linear { x, w, b } => {
                let xv = val(*x);
                let wv = val(*w);
                let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.numel() / cin;
                if need(*x) {
                    let mut gx = xv.zeros_like();
                    kernels::matmul_bt_acc(rows, cout, cin, g.data(), wv.data(), gx.data_mut());
                    res.push((*x, gx));
                }
                if need(*w) {
                    let mut gw = wv.zeros_like();
                    kernels::matmul_at_acc(cin, rows, cout, xv.data(), g.data(), gw.data_mut());
                    res.push((*w, gw));
                }
                if let Some(b) = b {
                    if need(*b) {
                        res.push((*b, channel_sums(g.data(), cout)));
                    }
                }
            }
            Op::Sum(x) => {
                let xv = val(*x);
                res.push((*x, Tensor::full(xv.shape(), g.data()[0])));
            }
            Op::Mean(x) => {
                let xv = val(*x);
                let n = T::from_f64(xv.numel().max(1) as f64);
                res.push((*x, Tensor::full(xv.shape(), g.data()[0] / n)));
            }
            Op::FrobNorm(x) => {
                let xv = val(*x);
                let n = out.data()[0];
                let gx = if n > T::zero() {
                    xv.scale(g.data()[0] / n)
                } else {
                    xv.zeros_like()
                };
                res.push((*x, gx));
            }
            Op::SampleNorms(x) => {
                let xv = val(*x);
                let norms = out.data();
                let (batch, ch) = if xv.rank() == 4 { (xv.shape()[2], xv.shape()[3]) } else { (1, xv.numel()) };
                let gx: Vec<T> = xv
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &xi)| {
                        let b = (i / ch) % batch;
                        if norms[b] > T::zero() {
                            g.data()[b] * xi / norms[b]
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                res.push((*x, Tensor::new(xv.shape().to_vec(), gx).unwrap()));
            }
            Op::Concat(parts) => {
                let total = *out.shape().last().unwrap();
                let rows = out.numel() / total;
                let mut offset = 0;
                for p in parts {
                    let pv = val(*p);
                    let c = *pv.shape().last().unwrap();
                    if need(*p) {
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g.data()[r * total + offset..r * total + offset + c]);
                        }
                        res.push((*p, Tensor::new(pv.shape().to_vec(), gp).unwrap()));
                    }
                    offset += c;
                }
            }
            Op::Slice { x, start } => {
                let xv = val(*x);
                let total = *xv.shape().last().unwrap();
                let len = *out.shape().last().unwrap();
                let mut gx = xv.zeros_like();
                for (r, row) in g.data().chunks_exact(len).enumerate() {
                    gx.data_mut()[r * total + start..r * total + start + len].copy_from_slice(row);
                }
                res.push((*x, gx));
            }
            Op::Reshape(x) => {
                let xv = val(*x);
                res.push((*x, g.clone().reshape(xv.shape()).unwrap()));
            }
            Op::ToComplex(x) => {
                let xv = val(*x);
                let re: Vec<T> = g.as_complex().iter().map(|z| z.re).collect();
                res.push((*x, Tensor::new(xv.shape().to_vec(), re).unwrap()));
            }
            Op::RealPart(x) => {
                let z: Vec<Complex<T>> = g.data().iter().map(|&r| Complex::new(r, T::zero())).collect();
                res.push((*x, Tensor::from_complex(g.shape().to_vec(), z).unwrap()));
            }
            Op::Fft2(x) => {
                // Adjoint of the unnormalized DFT is the unnormalized inverse DFT.
                let mut gx = g.clone();
                transform_in_place(&mut gx, true).unwrap();
                res.push((*x, gx));
            }
            Op::Ifft2(x) => {
                let mut gx = g.clone();
                transform_in_place(&mut gx, false).unwrap();
                let n = T::from_f64((g.shape()[0] * g.shape()[1]) as f64);
                gx.data_mut().iter_mut().for_each(|v| *v /= n);
                res.push((*x, gx));
            }
            Op::TruncFft { x, modes } => {
                let (h, w, lane) = fft_dims(g);
                let gx = fft::truncated_idft_real(g.as_complex(), h, w, lane, *modes);
                res.push((*x, Tensor::new(g.shape().to_vec(), gx).unwrap()));
            }
            Op::TruncIfftReal { x, modes } => {
                let (h, w, lane) = fft_dims(g);
                let n = T::from_f64((h * w) as f64);
                let mut gz = fft::truncated_dft(g.data(), h, w, lane, *modes);
                gz.iter_mut().for_each(|z| *z = *z / n);
                res.push((*x, Tensor::from_complex(g.shape().to_vec(), gz).unwrap()));
            }
            Op::SpectralMix { x, low, high, modes } => {
                let xv = val(*x);
                let plan = MixPlan::new(xv.shape(), *modes);
                if need(*x) {
                    let mut gx = xv.zeros_like();
                    plan.run(|k1, k2, weights_low, widx| {
                        let r = if weights_low { val(*low) } else { val(*high) };
                        let off = plan.block_offset(k1, k2);
                        // gX += gY @ R^H
                        unsafe {
                            kernels::cgemm_acc(
                                plan.lanes,
                                plan.d,
                                plan.d,
                                CMat { ptr: g.data().as_ptr().add(2 * off), rs: plan.d as isize, cs: 1, conj: false },
                                CMat { ptr: r.data().as_ptr().add(2 * widx), rs: 1, cs: plan.d as isize, conj: true },
                                CMat { ptr: gx.data_mut().as_mut_ptr().add(2 * off), rs: plan.d as isize, cs: 1, conj: false },
                            );
                        }
                    });
                    res.push((*x, gx));
                }
                for (wvar, is_low) in [(*low, true), (*high, false)] {
                    if !need(wvar) {
                        continue;
                    }
                    let mut gw = val(wvar).zeros_like();
                    plan.run(|k1, k2, weights_low, widx| {
                        if weights_low != is_low {
                            return;
                        }
                        let off = plan.block_offset(k1, k2);
                        // gR += X^H @ gY
                        unsafe {
                            kernels::cgemm_acc(
                                plan.d,
                                plan.lanes,
                                plan.d,
                                CMat { ptr: xv.data().as_ptr().add(2 * off), rs: 1, cs: plan.d as isize, conj: true },
                                CMat { ptr: g.data().as_ptr().add(2 * off), rs: plan.d as isize, cs: 1, conj: false },
                                CMat { ptr: gw.data_mut().as_mut_ptr().add(2 * widx), rs: plan.d as isize, cs: 1, conj: false },
                            );
                        }
                    });
                    res.push((wvar, gw));
                }
            }
            Op::Conv { x, k, b, geom } => {
                if need(*x) {
                    let mut gx = val(*x).zeros_like();
                    geom.backward_input(g.data(), val(*k).data(), gx.data_mut());
                    res.push((*x, gx));
                }
                if need(*k) {
                    let mut gk = val(*k).zeros_like();
                    geom.backward_weight(val(*x).data(), g.data(), gk.data_mut());
                    res.push((*k, gk));
                }
                if let Some(b) = b {
                    if need(*b) {
                        res.push((*b, channel_sums(g.data(), geom.c_out)));
                    }
                }
            }
            Op::ConvTranspose { x, k, b, geom } => {
                // Forward was the conv adjoint, so the roles swap.
                if need(*x) {
                    let mut gx = val(*x).zeros_like();
                    geom.forward(g.data(), val(*k).data(), gx.data_mut());
                    res.push((*x, gx));
                }
                if need(*k) {
                    let mut gk = val(*k).zeros_like();
                    geom.backward_weight(g.data(), val(*x).data(), gk.data_mut());
                    res.push((*k, gk));
                }
                if let Some(b) = b {
                    if need(*b) {
                        res.push((*b, channel_sums(g.data(), geom.c_in)));
                    }
                }
            }
            Op::SpatialFlatten(x) => {
                let xv = val(*x);
                res.push((*x, unflatten_spatial(g, xv.shape())));
            }
            Op::SpatialUnflatten(x) => {
                res.push((*x, flatten_spatial(g)));
            }
        }
        res
    }
}

fn channel_sums<T: Scalar>(g: &[T], c: usize) -> Tensor<T> {
    let mut sums = vec![T::zero(); c];
    for row in g.chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Tensor::new(vec![c], sums).unwrap()
}

/// Unnormalized forward or inverse 2-D DFT over the two leading axes.
fn fft_dims<T: Scalar>(t: &Tensor<T>) -> (usize, usize, usize) {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    (h, w, t.shape()[2..].iter().product())
}

fn check_modes(shape: &[usize], modes: usize) -> Result<()> {
    let (h, w) = (shape[0], shape[1]);
    fft::check_pow2(h, w)?;
    if modes == 0 || 2 * modes > h || modes > w / 2 {
        return Err(Error::ModeBound { modes, height: h, width: w });
    }
    Ok(())
}

fn transform_in_place<T: Scalar>(t: &mut Tensor<T>, inverse: bool) -> Result<()> {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    let lane = t.numel() / (h * w);
    fft::fft2_in_place(t.as_complex_mut(), h, w, lane, inverse)
}

/// `[h, w, B, C] -> [B, h*w*C]`.
fn flatten_spatial<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w, b, c) = spatial_dims(x.shape()).expect("spatial tensor");
    let pix = h * w;
    let mut out = vec![T::zero(); x.numel()];
    for p in 0..pix {
        for bi in 0..b {
            let src = (p * b + bi) * c;
            let dst = bi * pix * c + p * c;
            out[dst..dst + c].copy_from_slice(&x.data()[src..src + c]);
        }
    }
    Tensor::new(vec![b, pix * c], out).unwrap()
}

/// `[B, h*w*C] -> shape` (a rank-4 `[h, w, B, C]` shape).
fn unflatten_spatial<T: Scalar>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let (h, w, b, c) = spatial_dims(shape).expect("spatial shape");
    let pix = h * w;
    let mut out = vec![T::zero(); x.numel()];
    for p in 0..pix {
        for bi in 0..b {
            let dst = (p * b + bi) * c;
            let src = bi * pix * c + p * c;
            out[dst..dst + c].copy_from_slice(&x.data()[src..src + c]);
        }
    }
    Tensor::new(shape.to_vec(), out).unwrap()
}

/// Index bookkeeping for the truncated spectral product.
struct MixPlan {
    h: usize,
    w: usize,
    lanes: usize,
    d: usize,
    modes: usize,
}

impl MixPlan {
    fn new(shape: &[usize], modes: usize) -> Self {
        let (h, w) = (shape[0], shape[1]);
        let d = *shape.last().unwrap();
        let lanes = shape.iter().product::<usize>() / (h * w * d);
        MixPlan { h, w, lanes, d, modes }
    }

    /// Complex-element offset of the `[lanes, d]` block at mode `(k1, k2)`.
    fn block_offset(&self, k1: usize, k2: usize) -> usize {
        (k1 * self.w + k2) * self.lanes * self.d
    }

    /// Calls `f(k1, k2, uses_low_block, weight_offset)` for every retained mode.
    fn run(&self, mut f: impl FnMut(usize, usize, bool, usize)) {
        let m = self.modes;
        let dd = self.d * self.d;
        for r in 0..m {
            for k2 in 0..m {
                f(r, k2, true, (r * m + k2) * dd);
                f(self.h - m + r, k2, false, (r * m + k2) * dd);
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    fn binary(&self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let av = self.value(a);
        let bv = self.value(b);
        if av.is_complex() || bv.is_complex() {
            return Err(Error::InvalidArgument("element-wise ops take real tensors".into()));
        }
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let inner = broadcast_inner(av.shape(), bv.shape()).ok_or_else(|| shape_err(name, av.shape(), bv.shape()))?;
        let bd = bv.data();
        let inner = inner.max(1);
        let data: Vec<T> = av
            .data()
            .chunks_exact(inner)
            .flat_map(|ac| {
                ac.iter().zip(bd).map(|(&x, &y)| match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                })
            })
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Binary { kind, a, b }))
    }

    /// Element-wise `a (op) b` with `b` broadcast per the module rule.
    pub fn ew_op(&self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        self.binary(kind, a, b)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn scale(&self, x: Var, s: T) -> Var {
        let value = self.value(x).scale(s);
        self.push(value, Op::Scale { x, s })
    }

    /// `x + s` for a constant `s`.
    pub fn shift(&self, x: Var, s: T) -> Var {
        let value = self.value(x).map(|v| v + s);
        self.push(value, Op::Shift { x })
    }

    pub fn exp(&self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.exp());
        self.push(value, Op::Exp(x))
    }

    /// Tanh-approximation GELU.
    pub fn gelu(&self, x: Var) -> Var {
        let value = self.value(x).map(gelu_fwd);
        self.push(value, Op::Gelu(x))
    }

    /// `max(tau^-1 log(1 + exp(tau x)), floor)`; zero adjoint where clamped.
    pub fn softplus_clamped(&self, x: Var, tau: T, floor: T) -> Result<Var> {
        if !(tau > T::zero()) {
            return Err(Error::InvalidArgument(format!("softplus needs tau > 0, got {tau}")));
        }
        let value = self.value(x).map(|v| softplus_raw(v, tau).max(floor));
        Ok(self.push(value, Op::Softplus { x, tau, floor }))
    }

    /// Location-wise affine map over the last axis: `x @ w + b`.
    pub fn pointwise_linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        if wv.rank() != 2 || xv.rank() == 0 || xv.shape().last() != Some(&wv.shape()[0]) {
            return Err(shape_err("pointwise_linear", xv.shape(), wv.shape()));
        }
        let (cin, cout) = (wv.shape()[0], wv.shape()[1]);
        let rows = xv.numel() / cin;
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = cout;
        let mut out = vec![T::zero(); rows * cout];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [cout] {
                return Err(shape_err("pointwise_linear bias", &[cout], bv.shape()));
            }
            for row in out.chunks_exact_mut(cout) {
                row.copy_from_slice(bv.data());
            }
        }
        kernels::matmul_acc(rows, cin, cout, xv.data(), wv.data(), &mut out);
        Ok(self.push(Tensor::new(shape, out)?, Op::Linear { x, w, b }))
    }

    pub fn sum(&self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn mean(&self, x: Var) -> Var {
        let xv = self.value(x);
        let value = Tensor::scalar(xv.sum() / T::from_f64(xv.numel().max(1) as f64));
        self.push(value, Op::Mean(x))
    }

    /// Frobenius norm; defined as 0 (with zero adjoint) for the zero tensor.
    pub fn frob_norm(&self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).frob_norm());
        self.push(value, Op::FrobNorm(x))
    }

    /// Per-sample Frobenius norms: `[H, W, B, C] -> [B]`; any other rank is
    /// one sample and yields `[1]`.
    pub fn sample_norms(&self, x: Var) -> Var {
        let xv = self.value(x);
        let (batch, ch) = if xv.rank() == 4 {
            (xv.shape()[2], xv.shape()[3])
        } else {
            (1, xv.numel().max(1))
        };
        let mut sq = vec![T::zero(); batch];
        for (i, &v) in xv.data().iter().enumerate() {
            sq[(i / ch) % batch] += v * v;
        }
        let norms = sq.into_iter().map(|s| s.sqrt()).collect();
        self.push(Tensor::new(vec![batch], norms).unwrap(), Op::SampleNorms(x))
    }

    /// Concatenate along the last axis.
    pub fn concat(&self, parts: &[Var]) -> Result<Var> {
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let first = values.first().ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        let lead = &first.shape()[..first.rank() - 1];
        let mut total = 0;
        for v in &values {
            if v.is_complex() || v.rank() != first.rank() || &v.shape()[..v.rank() - 1] != lead {
                return Err(shape_err("concat", first.shape(), v.shape()));
            }
            total += v.shape().last().unwrap();
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for v in &values {
                let c = *v.shape().last().unwrap();
                data.extend_from_slice(&v.data()[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat(parts.to_vec())))
    }

    /// Channels `[start, start + len)` of the last axis.
    pub fn slice_last(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let total = *xv.shape().last().unwrap_or(&0);
        if xv.is_complex() || start + len > total || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {}) out of range for last axis {total}",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(xv.numel() / total * len);
        for row in xv.data().chunks_exact(total) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        Ok(self.push(Tensor::new(shape, data)?, Op::Slice { x, start }))
    }

    /// Split the last axis into its first `at` channels and the rest.
    pub fn split_last(&self, x: Var, at: usize) -> Result<(Var, Var)> {
        let total = *self.shape(x).last().unwrap_or(&0);
        Ok((self.slice_last(x, 0, at)?, self.slice_last(x, at, total.saturating_sub(at))?))
    }

    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = (*self.value(x)).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    pub fn to_complex(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_complex() {
            return Err(Error::InvalidArgument("to_complex of a complex tensor".into()));
        }
        let z = xv.data().iter().map(|&r| Complex::new(r, T::zero())).collect();
        Ok(self.push(Tensor::from_complex(xv.shape().to_vec(), z)?, Op::ToComplex(x)))
    }

    pub fn real_part(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if !xv.is_complex() {
            return Err(Error::InvalidArgument("real_part of a real tensor".into()));
        }
        let re = xv.as_complex().iter().map(|z| z.re).collect();
        Ok(self.push(Tensor::new(xv.shape().to_vec(), re)?, Op::RealPart(x)))
    }

    fn check_fft_input(&self, x: Var) -> Result<Tensor<T>> {
        let xv = self.value(x);
        if !xv.is_complex() || xv.rank() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fft2 needs a complex tensor of rank >= 2, got {:?}",
                xv.shape()
            )));
        }
        fft::check_pow2(xv.shape()[0], xv.shape()[1])?;
        Ok((*xv).clone())
    }

    /// Unnormalized 2-D DFT over the two leading axes.
    pub fn fft2(&self, x: Var) -> Result<Var> {
        let mut v = self.check_fft_input(x)?;
        transform_in_place(&mut v, false)?;
        Ok(self.push(v, Op::Fft2(x)))
    }

    /// Inverse of [`Tape::fft2`] (divides by `H * W`).
    pub fn ifft2(&self, x: Var) -> Result<Var> {
        let mut v = self.check_fft_input(x)?;
        transform_in_place(&mut v, true)?;
        let n = T::from_f64((v.shape()[0] * v.shape()[1]) as f64);
        v.data_mut().iter_mut().for_each(|s| *s /= n);
        Ok(self.push(v, Op::Ifft2(x)))
    }

    /// Spectrum of a real `[H, W, ..]` tensor restricted to the modes kept by
    /// [`Tape::spectral_mix`]; the rest is zero. Equals `fft2(to_complex(x))`
    /// on the kept modes.
    pub fn rfft2_modes(&self, x: Var, modes: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.is_complex() || xv.rank() < 3 {
            return Err(Error::InvalidArgument(format!("rfft2_modes needs a real [H, W, ..] tensor, got {:?}", xv.shape())));
        }
        check_modes(xv.shape(), modes)?;
        let (h, w, lane) = fft_dims(&xv);
        let z = fft::truncated_dft(xv.data(), h, w, lane, modes);
        Ok(self.push(Tensor::from_complex(xv.shape().to_vec(), z)?, Op::TruncFft { x, modes }))
    }

    /// `real_part(ifft2(y))` with `y` read only on the kept modes.
    pub fn irfft2_modes(&self, y: Var, modes: usize) -> Result<Var> {
        let yv = self.value(y);
        if !yv.is_complex() || yv.rank() < 3 {
            return Err(Error::InvalidArgument(format!("irfft2_modes needs a complex [H, W, ..] tensor, got {:?}", yv.shape())));
        }
        check_modes(yv.shape(), modes)?;
        let (h, w, lane) = fft_dims(&yv);
        let n = T::from_f64((h * w) as f64);
        let mut out = fft::truncated_idft_real(yv.as_complex(), h, w, lane, modes);
        out.iter_mut().for_each(|v| *v /= n);
        Ok(self.push(Tensor::new(yv.shape().to_vec(), out)?, Op::TruncIfftReal { x: y, modes }))
    }

    /// Truncated per-mode channel mixing of a spectrum `[H, W, ..., d]`.
    ///
    /// Rows `k1 < m` use `low[k1]`, rows `k1 >= H - m` use
    /// `high[k1 - (H - m)]`; only columns `k2 < m` are kept, everything else
    /// is zero.
    pub fn spectral_mix(&self, x: Var, low: Var, high: Var, modes: usize) -> Result<Var> {
        let xv = self.value(x);
        let lv = self.value(low);
        let hv = self.value(high);
        if !xv.is_complex() || xv.rank() < 3 {
            return Err(Error::InvalidArgument("spectral_mix needs a complex [H, W, .., d] spectrum".into()));
        }
        let (h, w) = (xv.shape()[0], xv.shape()[1]);
        if modes == 0 || 2 * modes > h || modes > w / 2 {
            return Err(Error::ModeBound { modes, height: h, width: w });
        }
        let d = *xv.shape().last().unwrap();
        let wshape = [modes, modes, d, d];
        for r in [&lv, &hv] {
            if !r.is_complex() || r.shape() != wshape {
                return Err(shape_err("spectral_mix weights", &wshape, r.shape()));
            }
        }
        let plan = MixPlan::new(xv.shape(), modes);
        let mut out = xv.zeros_like();
        plan.run(|k1, k2, is_low, widx| {
            let r = if is_low { &lv } else { &hv };
            let off = plan.block_offset(k1, k2);
            unsafe {
                kernels::cgemm_acc(
                    plan.lanes,
                    d,
                    d,
                    CMat { ptr: xv.data().as_ptr().add(2 * off), rs: d as isize, cs: 1, conj: false },
                    CMat { ptr: r.data().as_ptr().add(2 * widx), rs: d as isize, cs: 1, conj: false },
                    CMat { ptr: out.data_mut().as_mut_ptr().add(2 * off), rs: d as isize, cs: 1, conj: false },
                );
            }
        });
        Ok(self.push(out, Op::SpectralMix { x, low, high, modes }))
    }

    fn as_rank4(&self, x: Var, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        let shape = self.shape(x);
        match *shape {
            [h, w, b, c] => Ok((h, w, b, c)),
            _ => Err(shape_err(op, &shape, &[0, 0, 0, 0])),
        }
    }

    /// 3x3 convolution of `[H, W, B, C_in]` with kernel `[3, 3, C_in, C_out]`.
    pub fn conv2d(&self, x: Var, k: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (h, w, batch, cin) = self.as_rank4(x, "conv2d")?;
        let kv = self.value(k);
        if kv.rank() != 4 || kv.shape()[..3] != [3, 3, cin] {
            return Err(shape_err("conv2d kernel", &[3, 3, cin, 0], kv.shape()));
        }
        let cout = kv.shape()[3];
        let geom = ConvGeom::new(h, w, batch, cin, cout, stride, pad);
        let mut out = Tensor::zeros(&[geom.h_out, geom.w_out, batch, cout]);
        self.fill_bias(&mut out, b, cout)?;
        geom.forward(self.value(x).data(), kv.data(), out.data_mut());
        Ok(self.push(out, Op::Conv { x, k, b, geom }))
    }

    /// Stride-2, pad-1 transposed 3x3 convolution: `[n, n, B, C_in]` to
    /// `[2n, 2n, B, C_out]`, kernel `[3, 3, C_out, C_in]` (the adjoint of the
    /// matching stride-2 convolution).
    pub fn conv_transpose2d(&self, x: Var, k: Var, b: Option<Var>) -> Result<Var> {
        let (h, w, batch, cin) = self.as_rank4(x, "conv_transpose2d")?;
        let kv = self.value(k);
        if kv.rank() != 4 || kv.shape()[..2] != [3, 3] || kv.shape()[3] != cin {
            return Err(shape_err("conv_transpose2d kernel", &[3, 3, 0, cin], kv.shape()));
        }
        let cout = kv.shape()[2];
        let geom = ConvGeom::new(2 * h, 2 * w, batch, cout, cin, 2, 1);
        debug_assert_eq!((geom.h_out, geom.w_out), (h, w));
        let mut out = Tensor::zeros(&[2 * h, 2 * w, batch, cout]);
        self.fill_bias(&mut out, b, cout)?;
        geom.backward_input(self.value(x).data(), kv.data(), out.data_mut());
        Ok(self.push(out, Op::ConvTranspose { x, k, b, geom }))
    }

    fn fill_bias(&self, out: &mut Tensor<T>, b: Option<Var>, c: usize) -> Result<()> {
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [c] {
                return Err(shape_err("bias", &[c], bv.shape()));
            }
            for row in out.data_mut().chunks_exact_mut(c) {
                row.copy_from_slice(bv.data());
            }
        }
        Ok(())
    }

    /// `[h, w, B, C] -> [B, h*w*C]`.
    pub fn flatten_spatial(&self, x: Var) -> Result<Var> {
        self.as_rank4(x, "flatten_spatial")?;
        let value = flatten_spatial(&self.value(x));
        Ok(self.push(value, Op::SpatialFlatten(x)))
    }

    /// `[B, h*w*C] -> [h, w, B, C]`.
    pub fn unflatten_spatial(&self, x: Var, h: usize, w: usize, c: usize) -> Result<Var> {
        let shape = self.shape(x);
        if shape.len() != 2 || shape[1] != h * w * c {
            return Err(shape_err("unflatten_spatial", &shape, &[0, h * w * c]));
        }
        let value = unflatten_spatial(&self.value(x), &[h, w, shape[0], c]);
        Ok(self.push(value, Op::SpatialUnflatten(x)))
    }
}
