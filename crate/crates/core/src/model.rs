//! Invertible Fourier neural operator: lifting/projection MLPs around a chain
//! of multiplicative coupling blocks.
//!
//! Tensors are `[H, W, B, C]` (or `[H, W, C]` for one sample). Normalized grid
//! coordinates `(i / (H - 1), j / (W - 1))` are appended to the inputs of both
//! lifting MLPs.

use rand::RngExt;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{uniform, Bound, ParamId, ParamStore};
use crate::spectral::FourierLayer;
use crate::tensor::{Scalar, Tensor};

/// Lower bound applied to the softplus scales, so the inverse divides by at
/// most `1e6`.
pub const SCALE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorConfig {
    pub c_in: usize,
    pub c_out: usize,
    /// Channels per half of the lifted state.
    pub width: usize,
    pub modes: usize,
    pub blocks: usize,
    pub tau: f64,
    pub hidden: usize,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        OperatorConfig {
            c_in: 1,
            c_out: 1,
            width: 32,
            modes: 8,
            blocks: 3,
            tau: 1.0,
            hidden: 128,
        }
    }
}

/// Location-wise MLP with GELU between layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, dims: &[usize], rng: &mut impl RngExt) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let w = store.add(format!("{prefix}.{i}.w"), uniform(rng, &[io[0], io[1]], bound));
                let b = store.add(format!("{prefix}.{i}.b"), uniform(rng, &[io[1]], bound));
                (w, b)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.gelu(h);
            }
            h = tape.pointwise_linear(h, p[w], Some(p[b]))?;
        }
        Ok(h)
    }

    pub fn num_scalars(dims: &[usize]) -> usize {
        dims.windows(2).map(|io| io[0] * io[1] + io[1]).sum()
    }
}

/// Two-step multiplicative coupling with distinct Fourier layers.
#[derive(Clone, Debug)]
pub struct Block {
    pub la: FourierLayer,
    pub lb: FourierLayer,
    pub tau: f64,
}

impl Block {
    fn scale<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, layer: &FourierLayer, v: Var) -> Result<Var> {
        let l = layer.forward(tape, p, v)?;
        tape.softplus_clamped(l, T::from_f64(self.tau), T::from_f64(SCALE_FLOOR))
    }

    /// `v1' = v1 * S(La(v2))`, then `v2' = v2 * S(Lb(v1'))`.
    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, v1: Var, v2: Var) -> Result<(Var, Var)> {
        let sa = self.scale(tape, p, &self.la, v2)?;
        let y1 = tape.mul(v1, sa)?;
        let sb = self.scale(tape, p, &self.lb, y1)?;
        let y2 = tape.mul(v2, sb)?;
        Ok((y1, y2))
    }

    /// Exact inverse of [`Block::forward`]: recovers `v2` first, then `v1`.
    pub fn inverse<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, y1: Var, y2: Var) -> Result<(Var, Var)> {
        let sb = self.scale(tape, p, &self.lb, y1)?;
        let v2 = tape.div(y2, sb)?;
        let sa = self.scale(tape, p, &self.la, v2)?;
        let v1 = tape.div(y1, sa)?;
        Ok((v1, v2))
    }
}

#[derive(Clone, Debug)]
pub struct Operator {
    pub cfg: OperatorConfig,
    pub p_lift: Mlp,
    pub q_proj: Mlp,
    pub p_prime: Mlp,
    pub q_prime: Mlp,
    pub blocks: Vec<Block>,
}

impl Operator {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: OperatorConfig, rng: &mut impl RngExt) -> Result<Self> {
        if cfg.blocks == 0 || cfg.width == 0 || cfg.modes == 0 || cfg.hidden == 0 {
            return Err(Error::InvalidArgument(
                "blocks, width, modes and hidden must all be positive".into(),
            ));
        }
        if !(cfg.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", cfg.tau)));
        }
        let (d2, h) = (2 * cfg.width, cfg.hidden);
        let p_lift = Mlp::new(store, "p", &[cfg.c_in + 2, h, d2], rng);
        let q_proj = Mlp::new(store, "q", &[d2, h, cfg.c_out], rng);
        let p_prime = Mlp::new(store, "p_prime", &[cfg.c_out + 2, h, d2], rng);
        let q_prime = Mlp::new(store, "q_prime", &[d2, h, cfg.c_in], rng);
        let blocks = (0..cfg.blocks)
            .map(|k| Block {
                la: FourierLayer::new(store, &format!("block{k}.a"), cfg.width, cfg.modes, rng),
                lb: FourierLayer::new(store, &format!("block{k}.b"), cfg.width, cfg.modes, rng),
                tau: cfg.tau,
            })
            .collect();
        Ok(Operator {
            cfg,
            p_lift,
            q_proj,
            p_prime,
            q_prime,
            blocks,
        })
    }

    /// Closed-form parameter count in real scalars.
    pub fn expected_scalars(cfg: &OperatorConfig) -> usize {
        let (d2, h) = (2 * cfg.width, cfg.hidden);
        let mlps = Mlp::num_scalars(&[cfg.c_in + 2, h, d2])
            + Mlp::num_scalars(&[d2, h, cfg.c_out])
            + Mlp::num_scalars(&[cfg.c_out + 2, h, d2])
            + Mlp::num_scalars(&[d2, h, cfg.c_in]);
        let d = cfg.width;
        let m = cfg.modes;
        mlps + cfg.blocks * 2 * (2 * m * m * d * d * 2 + d * d + d)
    }

    fn with_coords<T: Scalar>(&self, tape: &Tape<T>, x: Var) -> Result<Var> {
        let shape = tape.shape(x);
        if shape.len() != 3 && shape.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "expected [H, W, C] or [H, W, B, C], got {shape:?}"
            )));
        }
        let c = tape.constant(coordinates(&shape));
        tape.concat(&[x, c])
    }

    fn split<T: Scalar>(&self, tape: &Tape<T>, v: Var) -> Result<(Var, Var)> {
        tape.split_last(v, self.cfg.width)
    }

    /// `P(f, coords)` split into halves.
    pub fn lift<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, f: Var) -> Result<(Var, Var)> {
        let x = self.with_coords(tape, f)?;
        let v = self.p_lift.forward(tape, p, x)?;
        self.split(tape, v)
    }

    /// `P'(u, coords)` split into halves.
    pub fn lift_prime<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, u: Var) -> Result<(Var, Var)> {
        let x = self.with_coords(tape, u)?;
        let v = self.p_prime.forward(tape, p, x)?;
        self.split(tape, v)
    }

    pub fn project<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, v1: Var, v2: Var) -> Result<Var> {
        let v = tape.concat(&[v1, v2])?;
        self.q_proj.forward(tape, p, v)
    }

    pub fn project_prime<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, v1: Var, v2: Var) -> Result<Var> {
        let v = tape.concat(&[v1, v2])?;
        self.q_prime.forward(tape, p, v)
    }

    /// Blocks `1..=K` forward.
    pub fn chain_forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, v1: Var, v2: Var) -> Result<(Var, Var)> {
        self.blocks.iter().try_fold((v1, v2), |(a, b), blk| blk.forward(tape, p, a, b))
    }

    /// Blocks `K..=1` inverted.
    pub fn chain_inverse<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, v1: Var, v2: Var) -> Result<(Var, Var)> {
        self.blocks.iter().rev().try_fold((v1, v2), |(a, b), blk| blk.inverse(tape, p, a, b))
    }

    /// `Q(IF_K(...IF_1(P(f))))`.
    pub fn forward_predict<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, f: Var) -> Result<Var> {
        let (v1, v2) = self.lift(tape, p, f)?;
        let (v1, v2) = self.chain_forward(tape, p, v1, v2)?;
        self.project(tape, p, v1, v2)
    }

    /// `Q'(IF_1^-1(...IF_K^-1(P'(u))))`.
    pub fn inverse_latent<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, u: Var) -> Result<Var> {
        let (v1, v2) = self.lift_prime(tape, p, u)?;
        let (v1, v2) = self.chain_inverse(tape, p, v1, v2)?;
        self.project_prime(tape, p, v1, v2)
    }
}

/// Coordinate channels matching a `[H, W, C]` or `[H, W, B, C]` shape.
pub fn coordinates<T: Scalar>(shape: &[usize]) -> Tensor<T> {
    let (h, w) = (shape[0], shape[1]);
    let mut out = shape.to_vec();
    *out.last_mut().unwrap() = 2;
    let sx = 1.0 / (h.max(2) - 1) as f64;
    let sy = 1.0 / (w.max(2) - 1) as f64;
    Tensor::from_fn(&out, |idx| {
        let v = if *idx.last().unwrap() == 0 { idx[0] as f64 * sx } else { idx[1] as f64 * sy };
        T::from_f64(v)
    })
}
