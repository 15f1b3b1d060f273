//! Convolutional beta-VAE over `[H, W, B, C]` input fields.
//!
//! The encoder halves the grid with stride-2 3x3 convolutions (32, 64, 128,
//! ... channels, at most five layers) until it reaches 2x2, then two linear
//! heads produce `mu` and `logvar` of shape `[B, z_dim]`. The decoder mirrors
//! it with transposed convolutions and ends in a stride-1 convolution.

use rand::RngExt;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{uniform, Bound, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

const MAX_LAYERS: usize = 5;
const BASE_CHANNELS: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub grid: usize,
    pub c_in: usize,
    pub z_dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvParams {
    pub k: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub struct Vae {
    pub cfg: VaeConfig,
    /// Encoder channel progression, one entry per stride-2 layer.
    pub channels: Vec<usize>,
    /// Spatial size at the bottleneck.
    pub bottom: usize,
    pub enc: Vec<ConvParams>,
    pub mu_head: (ParamId, ParamId),
    pub logvar_head: (ParamId, ParamId),
    pub dec_in: (ParamId, ParamId),
    pub dec: Vec<ConvParams>,
    pub out: ConvParams,
}

/// Number of stride-2 layers for a grid.
pub fn encoder_depth(grid: usize) -> usize {
    (grid.trailing_zeros() as usize).saturating_sub(1).min(MAX_LAYERS)
}

fn conv_params<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    shape: [usize; 4],
    fan_in: usize,
    rng: &mut impl RngExt,
) -> ConvParams {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let bias_len = shape[3];
    let k = store.add(format!("{name}.k"), uniform(rng, &shape, bound));
    let b = store.add(format!("{name}.b"), uniform(rng, &[bias_len], bound));
    ConvParams { k, b }
}

fn linear<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    cin: usize,
    cout: usize,
    rng: &mut impl RngExt,
) -> (ParamId, ParamId) {
    let bound = 1.0 / (cin as f64).sqrt();
    let w = store.add(format!("{name}.w"), uniform(rng, &[cin, cout], bound));
    let b = store.add(format!("{name}.b"), uniform(rng, &[cout], bound));
    (w, b)
}

impl Vae {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: VaeConfig, rng: &mut impl RngExt) -> Result<Self> {
        if !cfg.grid.is_power_of_two() || cfg.grid < 4 {
            return Err(Error::InvalidArgument(format!(
                "VAE grid must be a power of two >= 4, got {}",
                cfg.grid
            )));
        }
        if cfg.z_dim == 0 || cfg.c_in == 0 {
            return Err(Error::InvalidArgument("z_dim and channel count must be positive".into()));
        }
        let depth = encoder_depth(cfg.grid);
        let channels: Vec<usize> = (0..depth).map(|i| BASE_CHANNELS << i).collect();
        let bottom = cfg.grid >> depth;
        let c_last = *channels.last().unwrap();
        let flat = bottom * bottom * c_last;

        let mut enc = Vec::with_capacity(depth);
        let mut cin = cfg.c_in;
        for (i, &c) in channels.iter().enumerate() {
            enc.push(conv_params(store, &format!("enc.conv{i}"), [3, 3, cin, c], 9 * cin, rng));
            cin = c;
        }
        let mu_head = linear(store, "enc.mu", flat, cfg.z_dim, rng);
        let logvar_head = linear(store, "enc.logvar", flat, cfg.z_dim, rng);
        let dec_in = linear(store, "dec.in", cfg.z_dim, flat, rng);
        // Transposed kernels are stored [3, 3, C_out, C_in] (the shape of the
        // stride-2 conv they are adjoint to), bias over C_out.
        let mut dec = Vec::with_capacity(depth);
        for i in (0..depth).rev() {
            let c_from = channels[i];
            let c_to = if i == 0 { BASE_CHANNELS } else { channels[i - 1] };
            let bound = 1.0 / ((9 * c_from) as f64).sqrt();
            let k = store.add(format!("dec.deconv{i}.k"), uniform(rng, &[3, 3, c_to, c_from], bound));
            let b = store.add(format!("dec.deconv{i}.b"), uniform(rng, &[c_to], bound));
            dec.push(ConvParams { k, b });
        }
        let out = conv_params(store, "dec.out", [3, 3, BASE_CHANNELS, cfg.c_in], 9 * BASE_CHANNELS, rng);
        Ok(Vae {
            cfg,
            channels,
            bottom,
            enc,
            mu_head,
            logvar_head,
            dec_in,
            dec,
            out,
        })
    }

    /// `(mu, logvar)`, each `[B, z_dim]`.
    pub fn encode<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, x: Var) -> Result<(Var, Var)> {
        let shape = tape.shape(x);
        let x = match shape[..] {
            [h, w, c] => tape.reshape(x, &[h, w, 1, c])?,
            _ => x,
        };
        let shape = tape.shape(x);
        let expect = [self.cfg.grid, self.cfg.grid];
        if shape.len() != 4 || shape[..2] != expect || shape[3] != self.cfg.c_in {
            return Err(Error::ShapeMismatch {
                op: "encode",
                lhs: shape,
                rhs: vec![self.cfg.grid, self.cfg.grid, 0, self.cfg.c_in],
            });
        }
        let mut h = x;
        for c in &self.enc {
            h = tape.conv2d(h, p[c.k], Some(p[c.b]), 2, 1)?;
            h = tape.gelu(h);
        }
        let flat = tape.flatten_spatial(h)?;
        let mu = tape.pointwise_linear(flat, p[self.mu_head.0], Some(p[self.mu_head.1]))?;
        let logvar = tape.pointwise_linear(flat, p[self.logvar_head.0], Some(p[self.logvar_head.1]))?;
        Ok((mu, logvar))
    }

    /// `[B, z_dim] -> [H, W, B, c_in]`.
    pub fn decode<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, z: Var) -> Result<Var> {
        let shape = tape.shape(z);
        if shape.len() != 2 || shape[1] != self.cfg.z_dim {
            return Err(Error::ShapeMismatch {
                op: "decode",
                lhs: shape,
                rhs: vec![0, self.cfg.z_dim],
            });
        }
        let h = tape.pointwise_linear(z, p[self.dec_in.0], Some(p[self.dec_in.1]))?;
        let c_last = *self.channels.last().unwrap();
        let h = tape.unflatten_spatial(h, self.bottom, self.bottom, c_last)?;
        let mut h = tape.gelu(h);
        for c in &self.dec {
            h = tape.conv_transpose2d(h, p[c.k], Some(p[c.b]))?;
            h = tape.gelu(h);
        }
        tape.conv2d(h, p[self.out.k], Some(p[self.out.b]), 1, 1)
    }
}

/// `z = mu + exp(logvar / 2) * eps`.
pub fn reparameterize<T: Scalar>(tape: &Tape<T>, mu: Var, logvar: Var, eps: Var) -> Result<Var> {
    let half = tape.scale(logvar, T::from_f64(0.5));
    let std = tape.exp(half);
    let noise = tape.mul(std, eps)?;
    tape.add(mu, noise)
}

/// `0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)` averaged over the batch
/// (leading) axis.
pub fn kl_divergence<T: Scalar>(tape: &Tape<T>, mu: Var, logvar: Var) -> Result<Var> {
    let batch = tape.shape(mu).first().copied().unwrap_or(1).max(1);
    let mu2 = tape.mul(mu, mu)?;
    let ev = tape.exp(logvar);
    let a = tape.add(mu2, ev)?;
    let a = tape.sub(a, logvar)?;
    let a = tape.shift(a, -T::one());
    let s = tape.sum(a);
    Ok(tape.scale(s, T::from_f64(0.5 / batch as f64)))
}

/// Standard-normal draws shaped like `shape`.
pub fn standard_normal<T: Scalar>(rng: &mut impl RngExt, shape: &[usize]) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::from_f64(rng.sample(rand_distr::StandardNormal)))
}
