//! Piecewise-constant permeability fields with three regions.

use std::fmt;
use std::str::FromStr;

use rand::RngExt;

use crate::error::Error;
use crate::tensor::Tensor;

/// Smallest permeability a region may take.
pub const PERM_FLOOR: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Two parallel 45-degree interfaces `x1 + x2 = w`.
    Line,
    /// Two sinusoidal interfaces `x2 = p + 0.1 sin(2.5 pi (x1 + r))`.
    Curv,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Line => "dline",
            Kind::Curv => "dcurv",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "dline" => Ok(Kind::Line),
            "dcurv" => Ok(Kind::Curv),
            other => Err(Error::Config(format!("task must be dline or dcurv, got {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    Line { w1: f64, w2: f64, q: [f64; 3] },
    Curv { p1: f64, p2: f64, r1: f64, r2: f64, q: [f64; 3] },
}

fn permeabilities(rng: &mut impl RngExt, hi: f64) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(0.0..hi).max(PERM_FLOOR))
}

pub fn sample_geometry(kind: Kind, rng: &mut impl RngExt) -> Geometry {
    match kind {
        Kind::Line => {
            let w1 = rng.random_range(0.0..1.0 / 3.0);
            let w2 = rng.random_range(1.0 / 3.0..2.0 / 3.0);
            Geometry::Line {
                w1,
                w2,
                q: permeabilities(rng, 10.0),
            }
        }
        Kind::Curv => {
            let p1 = rng.random_range(0.15..0.4);
            let p2 = rng.random_range(0.6..0.85);
            let r1 = rng.random_range(0.0..1.0);
            let r2 = rng.random_range(0.0..1.0);
            Geometry::Curv {
                p1,
                p2,
                r1,
                r2,
                q: permeabilities(rng, 15.0),
            }
        }
    }
}

fn curve(p: f64, r: f64, x1: f64) -> f64 {
    p + 0.1 * (2.5 * std::f64::consts::PI * (x1 + r)).sin()
}

impl Geometry {
    pub fn kind(&self) -> Kind {
        match self {
            Geometry::Line { .. } => Kind::Line,
            Geometry::Curv { .. } => Kind::Curv,
        }
    }

    pub fn q(&self) -> [f64; 3] {
        match *self {
            Geometry::Line { q, .. } | Geometry::Curv { q, .. } => q,
        }
    }

    /// Region index (0, 1 or 2) of the point `(x1, x2)`.
    pub fn region(&self, x1: f64, x2: f64) -> usize {
        match *self {
            Geometry::Line { w1, w2, .. } => {
                let s = x1 + x2;
                usize::from(w1 < s) + usize::from(w2 < s)
            }
            Geometry::Curv { p1, p2, r1, r2, .. } => {
                usize::from(curve(p1, r1, x1) < x2) + usize::from(curve(p2, r2, x1) < x2)
            }
        }
    }

    /// Node values on an `n x n` grid; node `(i, j)` sits at
    /// `(i / (n - 1), j / (n - 1))`.
    pub fn rasterize(&self, n: usize) -> Tensor<f64> {
        assert!(n >= 2, "grid too small");
        let h = 1.0 / (n - 1) as f64;
        let q = self.q();
        Tensor::from_fn(&[n, n], |idx| q[self.region(idx[0] as f64 * h, idx[1] as f64 * h)])
    }
}
