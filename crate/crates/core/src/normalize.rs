//! Per-channel standardization of inputs and outputs.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

/// Channel-wise `(x - mean) / std` for the input field `f` and the output
/// field `u`. The default is the identity map.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub f_mean: Vec<f64>,
    pub f_std: Vec<f64>,
    pub u_mean: Vec<f64>,
    pub u_std: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Input,
    Output,
}

impl Normalizer {
    pub fn identity(c_in: usize, c_out: usize) -> Self {
        Normalizer {
            f_mean: vec![0.0; c_in],
            f_std: vec![1.0; c_in],
            u_mean: vec![0.0; c_out],
            u_std: vec![1.0; c_out],
        }
    }

    /// Statistics over every location and sample of channel-last tensors.
    /// Channels with zero spread keep a unit std.
    pub fn fit<T: Scalar>(fs: &[Tensor<T>], us: &[Tensor<T>]) -> Self {
        let (f_mean, f_std) = channel_stats(fs);
        let (u_mean, u_std) = channel_stats(us);
        Normalizer {
            f_mean,
            f_std,
            u_mean,
            u_std,
        }
    }

    fn stats(&self, field: Field) -> (&[f64], &[f64]) {
        match field {
            Field::Input => (&self.f_mean, &self.f_std),
            Field::Output => (&self.u_mean, &self.u_std),
        }
    }

    pub fn normalize<T: Scalar>(&self, x: &Tensor<T>, field: Field) -> Tensor<T> {
        let (mean, std) = self.stats(field);
        let c = mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| T::from_f64((v.to_f64() - mean[i % c]) / std[i % c]))
            .collect();
        Tensor::new(x.shape().to_vec(), data).unwrap()
    }

    pub fn denormalize<T: Scalar>(&self, x: &Tensor<T>, field: Field) -> Tensor<T> {
        let (mean, std) = self.stats(field);
        let c = mean.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| T::from_f64(v.to_f64() * std[i % c] + mean[i % c]))
            .collect();
        Tensor::new(x.shape().to_vec(), data).unwrap()
    }

    /// Differentiable de-normalization of a channel-last tape value.
    pub fn denormalize_var<T: Scalar>(&self, tape: &Tape<T>, x: Var, field: Field) -> Result<Var> {
        let (mean, std) = self.stats(field);
        let c = mean.len();
        let s = tape.constant(Tensor::new(vec![c], std.iter().map(|&v| T::from_f64(v)).collect())?);
        let m = tape.constant(Tensor::new(vec![c], mean.iter().map(|&v| T::from_f64(v)).collect())?);
        let y = tape.mul(x, s)?;
        tape.add(y, m)
    }

    pub fn is_identity(&self) -> bool {
        let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
        let one = |v: &[f64]| v.iter().all(|&x| x == 1.0);
        zero(&self.f_mean) && zero(&self.u_mean) && one(&self.f_std) && one(&self.u_std)
    }
}

fn channel_stats<T: Scalar>(xs: &[Tensor<T>]) -> (Vec<f64>, Vec<f64>) {
    let c = xs.first().map(|x| *x.shape().last().unwrap()).unwrap_or(1);
    let mut sum = vec![0.0; c];
    let mut count = 0usize;
    for x in xs {
        for (i, &v) in x.data().iter().enumerate() {
            sum[i % c] += v.to_f64();
        }
        count += x.numel() / c;
    }
    let n = count.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let mut sq = vec![0.0; c];
    for x in xs {
        for (i, &v) in x.data().iter().enumerate() {
            let d = v.to_f64() - mean[i % c];
            sq[i % c] += d * d;
        }
    }
    let std = sq
        .iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}
