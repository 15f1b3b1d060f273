//! Dense kernels behind the differentiable ops. Layout conventions:
//! matrices are row-major unless strides say otherwise, spatial tensors are
//! `[H, W, B, C]`, convolution kernels are `[3, 3, C_in, C_out]`.

use crate::tensor::Scalar;

/// `c (m x n) += a (m x k) @ b (k x n)`, all contiguous row-major.
pub fn matmul_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: bounds asserted above; c does not alias a or b.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            T::one(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m x n) += a (m x k) @ b^T` where `b` is stored `n x k`.
pub fn matmul_bt_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: bounds asserted above; c does not alias a or b.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            T::one(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c (m x n) += a^T @ b` where `a` is stored `k x m` and `b` is `k x n`.
pub fn matmul_at_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: bounds asserted above; c does not alias a or b.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            T::one(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Strided view of an interleaved complex matrix; strides count complex
/// elements.
#[derive(Clone, Copy)]
pub struct CMat<P> {
    pub ptr: P,
    pub rs: isize,
    pub cs: isize,
    pub conj: bool,
}

/// `c += op(a) @ op(b)` on interleaved complex storage, where `op` optionally
/// conjugates. Built from four real GEMMs over the re/im planes.
///
/// # Safety
/// Views must address valid memory for `m x k`, `k x n`, `m x n` matrices and
/// `c` must not overlap `a` or `b`.
pub unsafe fn cgemm_acc<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: CMat<*const T>,
    b: CMat<*const T>,
    c: CMat<*mut T>,
) {
    let sa = if a.conj { -T::one() } else { T::one() };
    let sb = if b.conj { -T::one() } else { T::one() };
    let (ar, ai) = (a.ptr, a.ptr.add(1));
    let (br, bi) = (b.ptr, b.ptr.add(1));
    let (cr, ci) = (c.ptr, c.ptr.add(1));
    let (rsa, csa) = (2 * a.rs, 2 * a.cs);
    let (rsb, csb) = (2 * b.rs, 2 * b.cs);
    let (rsc, csc) = (2 * c.rs, 2 * c.cs);
    let one = T::one();
    // re += ar*br - sa*sb*ai*bi ; im += sb*ar*bi + sa*ai*br
    T::gemm(m, k, n, one, ar, rsa, csa, br, rsb, csb, one, cr, rsc, csc);
    T::gemm(m, k, n, -(sa * sb), ai, rsa, csa, bi, rsb, csb, one, cr, rsc, csc);
    T::gemm(m, k, n, sb, ar, rsa, csa, bi, rsb, csb, one, ci, rsc, csc);
    T::gemm(m, k, n, sa, ai, rsa, csa, br, rsb, csb, one, ci, rsc, csc);
}

/// Geometry of a 3x3 convolution over `[H, W, B, C]` tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub h_in: usize,
    pub w_in: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub pad: usize,
}

pub const KSIZE: usize = 3;

impl ConvGeom {
    pub fn new(h_in: usize, w_in: usize, batch: usize, c_in: usize, c_out: usize, stride: usize, pad: usize) -> Self {
        let h_out = (h_in + 2 * pad - KSIZE) / stride + 1;
        let w_out = (w_in + 2 * pad - KSIZE) / stride + 1;
        ConvGeom {
            h_in,
            w_in,
            h_out,
            w_out,
            batch,
            c_in,
            c_out,
            stride,
            pad,
        }
    }

    /// Visit every (output pixel, tap, input pixel) triple that lies inside
    /// the input grid.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for oi in 0..self.h_out {
            for oj in 0..self.w_out {
                let out_pix = oi * self.w_out + oj;
                for di in 0..KSIZE {
                    let ii = (oi * self.stride + di) as isize - self.pad as isize;
                    if ii < 0 || ii >= self.h_in as isize {
                        continue;
                    }
                    for dj in 0..KSIZE {
                        let jj = (oj * self.stride + dj) as isize - self.pad as isize;
                        if jj < 0 || jj >= self.w_in as isize {
                            continue;
                        }
                        let in_pix = ii as usize * self.w_in + jj as usize;
                        f(out_pix, di * KSIZE + dj, in_pix);
                    }
                }
            }
        }
    }

    /// `out += conv(x, k)`; `out` is `[h_out, w_out, B, c_out]`.
    pub fn forward<T: Scalar>(&self, x: &[T], k: &[T], out: &mut [T]) {
        let (xb, ob, kb) = (
            self.batch * self.c_in,
            self.batch * self.c_out,
            self.c_in * self.c_out,
        );
        self.for_each_tap(|op, tap, ip| {
            matmul_acc(
                self.batch,
                self.c_in,
                self.c_out,
                &x[ip * xb..(ip + 1) * xb],
                &k[tap * kb..(tap + 1) * kb],
                &mut out[op * ob..(op + 1) * ob],
            );
        });
    }

    /// `gx += conv^T(g, k)`; the adjoint of [`ConvGeom::forward`] in `x`.
    pub fn backward_input<T: Scalar>(&self, g: &[T], k: &[T], gx: &mut [T]) {
        let (xb, ob, kb) = (
            self.batch * self.c_in,
            self.batch * self.c_out,
            self.c_in * self.c_out,
        );
        self.for_each_tap(|op, tap, ip| {
            matmul_bt_acc(
                self.batch,
                self.c_out,
                self.c_in,
                &g[op * ob..(op + 1) * ob],
                &k[tap * kb..(tap + 1) * kb],
                &mut gx[ip * xb..(ip + 1) * xb],
            );
        });
    }

    /// `gk += d<g, conv(x, k)>/dk`.
    pub fn backward_weight<T: Scalar>(&self, x: &[T], g: &[T], gk: &mut [T]) {
        let (xb, ob, kb) = (
            self.batch * self.c_in,
            self.batch * self.c_out,
            self.c_in * self.c_out,
        );
        self.for_each_tap(|op, tap, ip| {
            matmul_at_acc(
                self.c_in,
                self.batch,
                self.c_out,
                &x[ip * xb..(ip + 1) * xb],
                &g[op * ob..(op + 1) * ob],
                &mut gk[tap * kb..(tap + 1) * kb],
            );
        });
    }
}
