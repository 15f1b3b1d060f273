//! Radix-2 Cooley–Tukey transforms over the two leading axes of a
//! `[H, W, ...]` complex buffer.
//!
//! The trailing axes are treated as "lanes": every butterfly operates on a
//! contiguous block of `lane` values, so all channels (and batch entries) are
//! transformed together.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::tensor::Scalar;

fn bit_reverse_permute<T: Copy>(buf: &mut [T], n: usize, lane: usize) {
    let bits = n.trailing_zeros();
    if bits == 0 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            let (lo, hi) = buf.split_at_mut(j * lane);
            lo[i * lane..(i + 1) * lane].swap_with_slice(&mut hi[..lane]);
        }
    }
}

/// In-place unnormalized DFT along an axis of length `n` whose elements are
/// contiguous blocks of `lane` values. `inverse` flips the exponent sign.
fn fft_lanes<T: Scalar>(buf: &mut [Complex<T>], n: usize, lane: usize, inverse: bool) {
    debug_assert!(n.is_power_of_two());
    debug_assert_eq!(buf.len(), n * lane);
    bit_reverse_permute(buf, n, lane);
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex<T>> = (0..n / 2)
        .map(|k| {
            let theta = sign * 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex::new(T::from_f64(theta.cos()), T::from_f64(theta.sin()))
        })
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = (start + k) * lane;
                let b = (start + k + half) * lane;
                let (lo, hi) = buf.split_at_mut(b);
                let xa = &mut lo[a..a + lane];
                let xb = &mut hi[..lane];
                for (p, q) in xa.iter_mut().zip(xb.iter_mut()) {
                    let t = *q * w;
                    *q = *p - t;
                    *p = *p + t;
                }
            }
        }
        len *= 2;
    }
}

pub fn check_pow2(h: usize, w: usize) -> Result<()> {
    if h.is_power_of_two() && w.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(h, w))
    }
}

/// Unnormalized 2-D transform over the leading `h x w` axes; `lane` is the
/// product of the trailing dims.
pub fn fft2_in_place<T: Scalar>(
    buf: &mut [Complex<T>],
    h: usize,
    w: usize,
    lane: usize,
    inverse: bool,
) -> Result<()> {
    check_pow2(h, w)?;
    assert_eq!(buf.len(), h * w * lane);
    for row in buf.chunks_exact_mut(w * lane) {
        fft_lanes(row, w, lane, inverse);
    }
    fft_lanes(buf, h, w * lane, inverse);
    Ok(())
}

/// `[m, n]` tables of `cos` and `sin` of `2 pi (r0 + j) k / n` for `j < m`,
/// `k < n`.
fn trig_table<T: Scalar>(r0: usize, m: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let mut c = Vec::with_capacity(m * n);
    let mut s = Vec::with_capacity(m * n);
    for j in 0..m {
        for k in 0..n {
            let theta = 2.0 * std::f64::consts::PI * (((r0 + j) * k) % n) as f64 / n as f64;
            c.push(T::from_f64(theta.cos()));
            s.push(T::from_f64(theta.sin()));
        }
    }
    (c, s)
}

/// Spectrum rows kept by a truncation to `m` modes: `0..m` and `h-m..h`.
fn kept_row_starts(h: usize, m: usize) -> [usize; 2] {
    [0, h - m]
}

/// Forward DFT of a real `[h, w, lane]` buffer restricted to rows
/// `k1 < m`, `k1 >= h - m` and columns `k2 < m`; every other entry of the
/// returned `[h, w, lane]` spectrum is zero.
pub fn truncated_dft<T: Scalar>(x: &[T], h: usize, w: usize, lane: usize, m: usize) -> Vec<Complex<T>> {
    assert_eq!(x.len(), h * w * lane);
    assert!(2 * m <= h && m <= w);
    let ml = m * lane;
    let (cw, sw) = trig_table::<T>(0, m, w);
    let mut tre = vec![T::zero(); h * ml];
    let mut tim = vec![T::zero(); h * ml];
    let one = T::one();
    unsafe {
        for r in 0..h {
            let xr = x.as_ptr().add(r * w * lane);
            let (l, ls) = (lane as isize, 1);
            T::gemm(m, w, lane, one, cw.as_ptr(), w as isize, 1, xr, l, ls, T::zero(), tre.as_mut_ptr().add(r * ml), l, ls);
            T::gemm(m, w, lane, -one, sw.as_ptr(), w as isize, 1, xr, l, ls, T::zero(), tim.as_mut_ptr().add(r * ml), l, ls);
        }
    }
    let mut out = vec![Complex::new(T::zero(), T::zero()); h * w * lane];
    let base = out.as_mut_ptr() as *mut T;
    let (rsc, csc) = (2 * (w * lane) as isize, 2);
    let (rst, cst) = (ml as isize, 1);
    for r0 in kept_row_starts(h, m) {
        let (c1, s1) = trig_table::<T>(r0, m, h);
        unsafe {
            let re = base.add(2 * r0 * w * lane);
            let im = re.add(1);
            // X = (c1 - i s1)(Tre + i Tim)
            T::gemm(m, h, ml, one, c1.as_ptr(), h as isize, 1, tre.as_ptr(), rst, cst, T::zero(), re, rsc, csc);
            T::gemm(m, h, ml, one, s1.as_ptr(), h as isize, 1, tim.as_ptr(), rst, cst, one, re, rsc, csc);
            T::gemm(m, h, ml, one, c1.as_ptr(), h as isize, 1, tim.as_ptr(), rst, cst, T::zero(), im, rsc, csc);
            T::gemm(m, h, ml, -one, s1.as_ptr(), h as isize, 1, tre.as_ptr(), rst, cst, one, im, rsc, csc);
        }
    }
    out
}

/// `Re` of the unnormalized inverse DFT of a `[h, w, lane]` spectrum, reading
/// only the modes kept by [`truncated_dft`].
pub fn truncated_idft_real<T: Scalar>(y: &[Complex<T>], h: usize, w: usize, lane: usize, m: usize) -> Vec<T> {
    assert_eq!(y.len(), h * w * lane);
    assert!(2 * m <= h && m <= w);
    let ml = m * lane;
    let one = T::one();
    let mut zre = vec![T::zero(); h * ml];
    let mut zim = vec![T::zero(); h * ml];
    let base = y.as_ptr() as *const T;
    let (rsy, csy) = (2 * (w * lane) as isize, 2);
    let (rsz, csz) = (ml as isize, 1);
    for r0 in kept_row_starts(h, m) {
        // [h, m] tables: element (row, j) for spectrum row r0 + j.
        let (c1, s1) = trig_table::<T>(r0, m, h);
        unsafe {
            let yre = base.add(2 * r0 * w * lane);
            let yim = yre.add(1);
            let (c, s) = (c1.as_ptr(), s1.as_ptr());
            let (rse, cse) = (1, h as isize);
            // Z = (c + i s)(Yre + i Yim)
            T::gemm(h, m, ml, one, c, rse, cse, yre, rsy, csy, one, zre.as_mut_ptr(), rsz, csz);
            T::gemm(h, m, ml, -one, s, rse, cse, yim, rsy, csy, one, zre.as_mut_ptr(), rsz, csz);
            T::gemm(h, m, ml, one, c, rse, cse, yim, rsy, csy, one, zim.as_mut_ptr(), rsz, csz);
            T::gemm(h, m, ml, one, s, rse, cse, yre, rsy, csy, one, zim.as_mut_ptr(), rsz, csz);
        }
    }
    let (cw, sw) = trig_table::<T>(0, m, w);
    let mut out = vec![T::zero(); h * w * lane];
    let l = lane as isize;
    unsafe {
        for r in 0..h {
            let o = out.as_mut_ptr().add(r * w * lane);
            T::gemm(w, m, lane, one, cw.as_ptr(), 1, w as isize, zre.as_ptr().add(r * ml), l, 1, T::zero(), o, l, 1);
            T::gemm(w, m, lane, -one, sw.as_ptr(), 1, w as isize, zim.as_ptr().add(r * ml), l, 1, one, o, l, 1);
        }
    }
    out
}
