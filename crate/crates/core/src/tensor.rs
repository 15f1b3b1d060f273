//! Dense row-major tensors over `f32`/`f64`, plus the on-disk tensor format.
//!
//! Complex tensors store interleaved `(re, im)` pairs, so a complex tensor of
//! shape `[4, 4]` owns 32 scalars.
//!
//! File layout: magic `IFNOTNSR`, version byte `0x01`, dtype byte
//! (`0x01` = real32, `0x02` = real64), rank byte, `rank` little-endian `u64`
//! dims, then the row-major payload in little-endian. Complex tensors are
//! written as real tensors with a trailing axis of size 2.

use std::fmt::{Debug, Display, LowerExp};
use std::fs;
use std::io::{Read, Write};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::path::Path;

use num_complex::Complex;
use num_traits::{Float, FloatConst};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IFNOTNSR";
pub const FORMAT_VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0x01,
            DType::F64 => 0x02,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(DType::F32),
            0x02 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" | "real32" => Some(DType::F32),
            "f64" | "real64" => Some(DType::F64),
            _ => None,
        }
    }
}

/// Floating-point element type usable in tensors and on the tape.
pub trait Scalar:
    Float
    + FloatConst
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a @ b + beta * c` with arbitrary row/column strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-overlapping (for `c`)
    /// matrices of the given dimensions.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    complex: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {shape:?} needs {} elements, got {}",
                numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            complex: false,
        })
    }

    /// Complex tensor from interleaved `(re, im)` scalars.
    pub fn new_complex(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if 2 * numel(&shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "complex shape {shape:?} needs {} scalars, got {}",
                2 * numel(&shape),
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            complex: true,
        })
    }

    pub fn from_complex(shape: Vec<usize>, values: Vec<Complex<T>>) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len() * 2);
        for z in values {
            data.push(z.re);
            data.push(z.im);
        }
        Self::new_complex(shape, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); numel(shape)],
            complex: false,
        }
    }

    pub fn complex_zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); 2 * numel(shape)],
            complex: true,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
            complex: false,
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
            complex: false,
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        let n = numel(shape);
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Tensor {
            shape: shape.to_vec(),
            data,
            complex: false,
        }
    }

    /// Same zero-filled layout (real or complex) as `self`.
    pub fn zeros_like(&self) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
            complex: self.complex,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of logical elements (a complex element counts once).
    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }

    pub fn is_complex(&self) -> bool {
        self.complex
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn as_complex(&self) -> &[Complex<T>] {
        assert!(self.complex, "tensor is real");
        // SAFETY: Complex<T> is #[repr(C)] { re: T, im: T } and the buffer
        // holds an even number of T.
        unsafe {
            std::slice::from_raw_parts(self.data.as_ptr() as *const Complex<T>, self.data.len() / 2)
        }
    }

    pub fn as_complex_mut(&mut self) -> &mut [Complex<T>] {
        assert!(self.complex, "tensor is real");
        // SAFETY: see `as_complex`.
        unsafe {
            std::slice::from_raw_parts_mut(
                self.data.as_mut_ptr() as *mut Complex<T>,
                self.data.len() / 2,
            )
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape,
                rhs: shape.to_vec(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Reinterpret a complex tensor as real with a trailing axis of 2.
    pub fn complex_to_pairs(mut self) -> Self {
        if self.complex {
            self.shape.push(2);
            self.complex = false;
        }
        self
    }

    /// Inverse of [`Tensor::complex_to_pairs`].
    pub fn pairs_to_complex(mut self) -> Result<Self> {
        if self.complex || self.shape.last() != Some(&2) {
            return Err(Error::InvalidArgument(format!(
                "expected a real tensor with trailing axis 2, got {:?}",
                self.shape
            )));
        }
        self.shape.pop();
        self.complex = true;
        Ok(self)
    }

    pub fn get(&self, idx: &[usize]) -> T {
        assert!(!self.complex);
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        assert!(!self.complex);
        let off = self.offset(idx);
        self.data[off] = value;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank");
        let mut off = 0;
        for (i, (&x, &n)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(x < n, "index {x} out of bounds for axis {i} of size {n}");
            off = off * n + x;
        }
        off
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            complex: self.complex,
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape || self.complex != other.complex {
            return Err(Error::ShapeMismatch {
                op: "zip_map",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            complex: self.complex,
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn frob_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
            complex: self.complex,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let t = self.clone().complex_to_pairs();
        let width = match T::DTYPE {
            DType::F32 => 4,
            DType::F64 => 8,
        };
        let mut out = Vec::with_capacity(11 + 8 * t.shape.len() + width * t.data.len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(T::DTYPE.code());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in &t.data {
            x.write_le(&mut out);
        }
        out
    }

    /// Parse a tensor file; payloads of the other float width are converted.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::TensorFormat {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 11 || &bytes[..8] != MAGIC {
            return Err(bad("missing IFNOTNSR magic"));
        }
        if bytes[8] != FORMAT_VERSION {
            return Err(bad(&format!("unsupported version {}", bytes[8])));
        }
        let dtype = DType::from_code(bytes[9]).ok_or_else(|| bad("unknown dtype byte"))?;
        let rank = bytes[10] as usize;
        let header = 11 + 8 * rank;
        if bytes.len() < header {
            return Err(bad("truncated header"));
        }
        let shape: Vec<usize> = (0..rank)
            .map(|i| {
                let s = 11 + 8 * i;
                u64::from_le_bytes(bytes[s..s + 8].try_into().unwrap()) as usize
            })
            .collect();
        let n = numel(&shape);
        let width = match dtype {
            DType::F32 => 4,
            DType::F64 => 8,
        };
        if bytes.len() != header + n * width {
            return Err(bad("payload length does not match shape"));
        }
        let payload = &bytes[header..];
        let data: Vec<T> = match dtype {
            DType::F64 => payload
                .chunks_exact(8)
                .map(|c| T::from_f64(f64::read_le(c)))
                .collect(),
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| T::from_f64(f32::read_le(c) as f64))
                .collect(),
        };
        Tensor::new(shape, data)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::io("<reader>", e))?;
        Self::from_bytes(&buf, Path::new("<reader>"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Worst element-wise relative deviation of `approx` from `exact`.
///
/// Each difference is divided by `max(|exact_i|, floor)`.
pub fn max_rel_error<T: Scalar>(approx: &Tensor<T>, exact: &Tensor<T>, floor: f64) -> f64 {
    assert_eq!(approx.data().len(), exact.data().len());
    approx
        .data()
        .iter()
        .zip(exact.data())
        .map(|(&a, &e)| {
            let (a, e) = (a.to_f64(), e.to_f64());
            (a - e).abs() / e.abs().max(floor)
        })
        .fold(0.0, f64::max)
}
