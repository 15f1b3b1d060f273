//! Finite-difference solve of `-div(a grad u) = g` on the unit square with
//! `u = 0` on the boundary.
//!
//! Nodes sit at `(i h, j h)` with `h = 1 / (n - 1)`. Interior equations use
//! the 5-point flux stencil with harmonic-mean face coefficients, which gives
//! a symmetric positive-definite system solved matrix-free by conjugate
//! gradients.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target for `||g - A u|| / ||g||` over interior nodes.
    pub tol: f64,
    pub jacobi: bool,
    /// Defaults to `50 n^2`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            jacobi: false,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: Tensor<f64>,
    pub iterations: usize,
    /// True relative residual of the returned `u`.
    pub residual: f64,
}

/// Face coefficients of the interior stencil.
struct Stencil {
    m: usize,
    inv_h2: f64,
    // east/west/north/south coefficients per interior unknown, row-major
    // over (i - 1, j - 1).
    xp: Vec<f64>,
    xm: Vec<f64>,
    yp: Vec<f64>,
    ym: Vec<f64>,
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

impl Stencil {
    fn new(a: &Tensor<f64>) -> Self {
        let n = a.shape()[0];
        let m = n - 2;
        let h = 1.0 / (n - 1) as f64;
        let at = |i: usize, j: usize| a.data()[i * n + j];
        let mut s = Stencil {
            m,
            inv_h2: 1.0 / (h * h),
            xp: vec![0.0; m * m],
            xm: vec![0.0; m * m],
            yp: vec![0.0; m * m],
            ym: vec![0.0; m * m],
        };
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let k = (i - 1) * m + (j - 1);
                let c = at(i, j);
                s.xp[k] = harmonic(c, at(i + 1, j));
                s.xm[k] = harmonic(c, at(i - 1, j));
                s.yp[k] = harmonic(c, at(i, j + 1));
                s.ym[k] = harmonic(c, at(i, j - 1));
            }
        }
        s
    }

    fn diag(&self, k: usize) -> f64 {
        (self.xp[k] + self.xm[k] + self.yp[k] + self.ym[k]) * self.inv_h2
    }

    /// `out = A x` on interior unknowns.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let m = self.m;
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                let mut acc = self.diag(k) * x[k];
                if i + 1 < m {
                    acc -= self.xp[k] * self.inv_h2 * x[k + m];
                }
                if i > 0 {
                    acc -= self.xm[k] * self.inv_h2 * x[k - m];
                }
                if j + 1 < m {
                    acc -= self.yp[k] * self.inv_h2 * x[k + 1];
                }
                if j > 0 {
                    acc -= self.ym[k] * self.inv_h2 * x[k - 1];
                }
                out[k] = acc;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve for `u` given node-valued permeability `a` and source `g`
/// (both `[n, n]`; boundary values of `g` are ignored).
pub fn darcy_solve(a: &Tensor<f64>, g: &Tensor<f64>, opts: &SolverOptions) -> Result<Solution> {
    let shape = a.shape();
    if shape.len() != 2 || shape[0] != shape[1] || shape[0] < 4 {
        return Err(Error::InvalidArgument(format!(
            "permeability must be [n, n] with n >= 4, got {shape:?}"
        )));
    }
    if g.shape() != shape {
        return Err(Error::ShapeMismatch {
            op: "darcy_solve",
            lhs: shape.to_vec(),
            rhs: g.shape().to_vec(),
        });
    }
    if let Some((index, &value)) = a.data().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveCoefficient { value, index });
    }
    let n = shape[0];
    let st = Stencil::new(a);
    let m = st.m;
    let b: Vec<f64> = (1..n - 1)
        .flat_map(|i| (1..n - 1).map(move |j| (i, j)))
        .map(|(i, j)| g.data()[i * n + j])
        .collect();
    let b_norm = norm(&b);
    if b_norm == 0.0 {
        return Ok(Solution {
            u: Tensor::zeros(&[n, n]),
            iterations: 0,
            residual: 0.0,
        });
    }
    let max_iter = opts.max_iter.unwrap_or(50 * n * n);
    let inv_diag: Vec<f64> = (0..m * m)
        .map(|k| if opts.jacobi { 1.0 / st.diag(k) } else { 1.0 })
        .collect();

    let mut x = vec![0.0; m * m];
    let mut r = b.clone();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m * m];
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let true_residual = |x: &[f64], ap: &mut [f64]| {
        st.apply(x, ap);
        let res: Vec<f64> = b.iter().zip(ap.iter()).map(|(b, a)| b - a).collect();
        (norm(&res) / b_norm, res)
    };
    loop {
        if norm(&r) / b_norm <= opts.tol {
            // The recurrence residual drifts; confirm against the real one
            // and restart from the current iterate if it disagrees.
            let (rel, res) = true_residual(&x, &mut ap);
            if rel <= opts.tol {
                let mut u = Tensor::zeros(&[n, n]);
                for i in 0..m {
                    for j in 0..m {
                        u.data_mut()[(i + 1) * n + (j + 1)] = x[i * m + j];
                    }
                }
                return Ok(Solution {
                    u,
                    iterations,
                    residual: rel,
                });
            }
            r = res;
            z = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
            p = z.clone();
            rz = dot(&r, &z);
        }
        if iterations >= max_iter {
            let (rel, _) = true_residual(&x, &mut ap);
            return Err(Error::SolverDiverged {
                iterations,
                residual: rel,
            });
        }
        st.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..m * m {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..m * m {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..m * m {
            p[k] = z[k] + beta * p[k];
        }
        iterations += 1;
    }
}

/// `A u` evaluated on interior nodes (boundary entries are zero); useful for
/// residual checks.
pub fn apply_operator(a: &Tensor<f64>, u: &Tensor<f64>) -> Tensor<f64> {
    let n = a.shape()[0];
    let st = Stencil::new(a);
    let m = st.m;
    let x: Vec<f64> = (1..n - 1)
        .flat_map(|i| (1..n - 1).map(move |j| (i, j)))
        .map(|(i, j)| u.data()[i * n + j])
        .collect();
    let mut y = vec![0.0; m * m];
    st.apply(&x, &mut y);
    let mut out = Tensor::zeros(&[n, n]);
    for i in 0..m {
        for j in 0..m {
            out.data_mut()[(i + 1) * n + (j + 1)] = y[i * m + j];
        }
    }
    out
}

/// `u* = sin(pi x1) sin(pi x2)` and its source `2 pi^2 u*` for `a = 1`.
pub fn manufactured(n: usize) -> (Tensor<f64>, Tensor<f64>) {
    let pi = std::f64::consts::PI;
    let h = 1.0 / (n - 1) as f64;
    let exact = Tensor::from_fn(&[n, n], |i| (pi * i[0] as f64 * h).sin() * (pi * i[1] as f64 * h).sin());
    let g = exact.scale(2.0 * pi * pi);
    (exact, g)
}

/// Root-mean-square nodal error of the manufactured problem at size `n`.
pub fn manufactured_error(n: usize, opts: &SolverOptions) -> Result<f64> {
    let (exact, g) = manufactured(n);
    let sol = darcy_solve(&Tensor::ones(&[n, n]), &g, opts)?;
    let diff = sol.u.zip_map(&exact, |a, b| a - b)?;
    Ok(diff.frob_norm() / n as f64)
}
