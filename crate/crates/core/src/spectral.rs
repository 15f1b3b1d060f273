//! Fourier layer: truncated spectral convolution plus a location-wise linear
//! path, followed by GELU.

use rand::RngExt;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::params::{complex_uniform, uniform, Bound, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

/// Parameter handles of one Fourier layer.
#[derive(Clone, Debug)]
pub struct FourierLayer {
    pub r_low: ParamId,
    pub r_high: ParamId,
    pub w: ParamId,
    pub b: ParamId,
    pub modes: usize,
    pub width: usize,
}

impl FourierLayer {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        width: usize,
        modes: usize,
        rng: &mut impl RngExt,
    ) -> Self {
        let s = 1.0 / (width * modes) as f64;
        let wshape = [modes, modes, width, width];
        let r_low = store.add(format!("{prefix}.r_low"), complex_uniform(rng, &wshape, s));
        let r_high = store.add(format!("{prefix}.r_high"), complex_uniform(rng, &wshape, s));
        let w = store.add(format!("{prefix}.w"), uniform(rng, &[width, width], 1.0 / (width as f64).sqrt()));
        let b = store.add(format!("{prefix}.b"), Tensor::zeros(&[width]));
        FourierLayer {
            r_low,
            r_high,
            w,
            b,
            modes,
            width,
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &Tape<T>, p: &Bound, v: Var) -> Result<Var> {
        fourier_layer(tape, v, p[self.r_low], p[self.r_high], p[self.w], p[self.b], self.modes)
    }

    pub fn num_scalars(&self) -> usize {
        let d = self.width;
        2 * 2 * self.modes * self.modes * d * d + d * d + d
    }
}

/// Real part of the inverse transform of the mode-truncated, channel-mixed
/// spectrum of `v` (`[H, W, .., d]`).
pub fn spectral_conv<T: Scalar>(tape: &Tape<T>, v: Var, r_low: Var, r_high: Var, modes: usize) -> Result<Var> {
    let zh = tape.rfft2_modes(v, modes)?;
    let mixed = tape.spectral_mix(zh, r_low, r_high, modes)?;
    tape.irfft2_modes(mixed, modes)
}

/// `gelu(v @ w + b + spectral_conv(v))`.
pub fn fourier_layer<T: Scalar>(
    tape: &Tape<T>,
    v: Var,
    r_low: Var,
    r_high: Var,
    w: Var,
    b: Var,
    modes: usize,
) -> Result<Var> {
    let lin = tape.pointwise_linear(v, w, Some(b))?;
    let spec = spectral_conv(tape, v, r_low, r_high, modes)?;
    let sum = tape.add(lin, spec)?;
    Ok(tape.gelu(sum))
}
